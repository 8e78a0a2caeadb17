//! Trained predictors, decision rules and the primal/dual objectives.

use serde::{Deserialize, Serialize};

use crate::data::{Features, ZScore};
use crate::error::{Error, Result};
use crate::kernels::{kernel_block, KernelSpec, NormalizedRows, RffMap, RowSource};
use crate::losses::{dual_box, primal_loss, DualPenalty, LossKind};
use crate::real::{dot, Precision, Real};

/// Exact kernel evaluations or the random feature surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Inexact,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Inexact => "inexact",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Mode::Exact),
            "inexact" | "rff" => Ok(Mode::Inexact),
            other => Err(format!("unknown mode `{other}` (expected exact or inexact)")),
        }
    }
}

/// Seeds for every random choice made during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Block partition, block selection and the bandwidth subsample.
    pub partition: u64,
    pub rff: u64,
    /// Train/validation split in the CLI.
    pub split: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            partition: 0,
            rff: 1,
            split: 2,
        }
    }
}

/// Final optimization summary of one binary or regression problem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PartSummary {
    pub iterations: usize,
    pub dual_objective: f64,
    pub primal_objective: Option<f64>,
    pub duality_gap: Option<f64>,
}

/// Everything about a model except its arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub loss: LossKind,
    pub lambda: f64,
    pub mode: Mode,
    pub kernel: KernelSpec,
    /// `true` when the bandwidth came from the median heuristic.
    pub sigma_from_median: bool,
    pub precision: Precision,
    pub rff_dim: Option<usize>,
    pub seeds: Seeds,
    pub block_size: usize,
    pub requested_iterations: usize,
    pub dim: usize,
    pub n_train: usize,
    /// Sorted class labels; empty for regression. Two entries mean a single
    /// binary model scoring the second class positive.
    pub classes: Vec<f64>,
    pub parts: Vec<PartSummary>,
}

impl ModelMeta {
    pub fn is_ovr(&self) -> bool {
        self.classes.len() > 2
    }

    pub fn n_parts(&self) -> usize {
        if self.is_ovr() {
            self.classes.len()
        } else {
            1
        }
    }
}

/// Weights of one problem: `alpha` (exact) or `theta` (inexact), plus the
/// `+-1`/regression targets it was trained on in exact mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Part<T> {
    pub weights: Vec<T>,
    pub labels: Vec<T>,
}

/// Arrays shared by all parts of a model in one precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Machine<T> {
    Exact {
        /// Normalized training rows, `n x d` row-major.
        support: Vec<T>,
        parts: Vec<Part<T>>,
    },
    Inexact {
        map: RffMap<T>,
        parts: Vec<Part<T>>,
    },
}

impl<T: Real> Machine<T> {
    pub fn parts(&self) -> &[Part<T>] {
        match self {
            Machine::Exact { parts, .. } | Machine::Inexact { parts, .. } => parts,
        }
    }

    /// Raw scores, one vector per part.
    pub fn scores(&self, kernel: &KernelSpec, x: &dyn RowSource<T>) -> Result<Vec<Vec<f64>>> {
        let n = x.n_rows();
        let d = x.dim();
        let parts = self.parts();
        let mut out = vec![Vec::with_capacity(n); parts.len()];
        match self {
            Machine::Exact { support, .. } => {
                let ns = support.len() / d.max(1);
                for start in (0..n).step_by(256) {
                    let rows: Vec<usize> = (start..(start + 256).min(n)).collect();
                    let k = kernel_block(kernel, &x.gather_vec(&rows), support, d)?;
                    for (p, o) in parts.iter().zip(out.iter_mut()) {
                        o.extend((0..rows.len()).map(|r| dot(&k[r * ns..(r + 1) * ns], &p.weights).f64()));
                    }
                }
            }
            Machine::Inexact { map, .. } => {
                let m = map.n_features;
                for start in (0..n).step_by(1024) {
                    let rows: Vec<usize> = (start..(start + 1024).min(n)).collect();
                    let z = map.map(&x.gather_vec(&rows))?;
                    for (p, o) in parts.iter().zip(out.iter_mut()) {
                        o.extend((0..rows.len()).map(|r| dot(&z[r * m..(r + 1) * m], &p.weights).f64()));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Machine in the precision it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Single(Machine<f32>),
    Double(Machine<f64>),
}

impl Predictor {
    pub fn precision(&self) -> Precision {
        match self {
            Predictor::Single(_) => Precision::Single,
            Predictor::Double(_) => Precision::Double,
        }
    }
}

/// A trained model ready for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub meta: ModelMeta,
    pub zscore: Option<ZScore>,
    pub predictor: Predictor,
}

impl TrainedModel {
    /// Raw scores of every part for each row of `x`.
    pub fn scores(&self, x: &Features) -> Result<Vec<Vec<f64>>> {
        if x.dim() != self.meta.dim {
            return Err(Error::DimensionMismatch {
                expected: self.meta.dim,
                actual: x.dim(),
            });
        }
        let rows = NormalizedRows {
            features: x,
            zscore: self.zscore.as_ref(),
        };
        match &self.predictor {
            Predictor::Single(m) => m.scores(&self.meta.kernel, &rows),
            Predictor::Double(m) => m.scores(&self.meta.kernel, &rows),
        }
    }

    /// Decision or regression values. For one-vs-rest models this is the
    /// winning class's score.
    pub fn predict_raw(&self, x: &Features) -> Result<Vec<f64>> {
        let s = self.scores(x)?;
        if s.len() == 1 {
            return Ok(s.into_iter().next().unwrap_or_default());
        }
        Ok(ovr_argmax(&s)
            .into_iter()
            .enumerate()
            .map(|(i, c)| s[c][i])
            .collect())
    }

    /// Class labels in the original label values.
    pub fn predict_label(&self, x: &Features) -> Result<Vec<f64>> {
        if !self.meta.loss.is_classification() {
            return Err(Error::Unsupported(format!(
                "label output for {} regression models",
                self.meta.loss
            )));
        }
        let classes = &self.meta.classes;
        let s = self.scores(x)?;
        if self.meta.is_ovr() {
            return Ok(ovr_argmax(&s).into_iter().map(|c| classes[c]).collect());
        }
        Ok(s[0]
            .iter()
            .map(|&u| if sign_label(u) > 0.0 { classes[1] } else { classes[0] })
            .collect())
    }

    /// Probability of the positive class (logistic binary models only).
    pub fn predict_proba(&self, x: &Features) -> Result<Vec<f64>> {
        if self.meta.loss != LossKind::Logistic || self.meta.is_ovr() {
            return Err(Error::Unsupported(format!(
                "probability output for {}{} models",
                if self.meta.is_ovr() { "one-vs-rest " } else { "" },
                self.meta.loss
            )));
        }
        Ok(self.predict_raw(x)?.into_iter().map(sigmoid).collect())
    }
}

/// `sign(u)` with `sign(0) = +1`.
pub fn sign_label(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Per-row index of the largest score; ties go to the lowest index.
pub fn ovr_argmax(scores: &[Vec<f64>]) -> Vec<usize> {
    let n = scores.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..scores.len() {
                if scores[c][i] > scores[best][i] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn check_square(k: &[f64], n: usize) -> Result<()> {
    if k.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            actual: k.len(),
        });
    }
    Ok(())
}

/// Minimization-form dual `1/2 a^T K a + (1/lambda) sum_i xi*_{y_i}(-lambda a_i)`
/// for a dense kernel matrix. The value reported in logs is its negation.
pub fn dual_objective(kind: LossKind, lambda: f64, k: &[f64], y: &[f64], alpha: &[f64]) -> Result<f64> {
    let n = y.len();
    check_square(k, n)?;
    if alpha.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: alpha.len(),
        });
    }
    let pen = DualPenalty::new(kind, lambda)?;
    let mut total = 0.0;
    for i in 0..n {
        let b = dual_box(kind, y[i], lambda)?;
        if !b.contains(alpha[i]) {
            return Err(Error::param(format!(
                "multiplier {i} = {} outside [{}, {}] for {kind}",
                alpha[i], b.lower, b.upper
            )));
        }
        total += 0.5 * alpha[i] * dot(&k[i * n..(i + 1) * n], alpha) + pen.value(y[i], alpha[i]);
    }
    Ok(total)
}

/// Primal objective `1/2 a^T K a + (1/lambda) sum_i loss(y_i, (K a)_i)`.
pub fn primal_objective(kind: LossKind, lambda: f64, k: &[f64], y: &[f64], alpha: &[f64]) -> Result<f64> {
    let n = y.len();
    check_square(k, n)?;
    let mut quad = 0.0;
    let mut loss = 0.0;
    for i in 0..n {
        let u = dot(&k[i * n..(i + 1) * n], alpha);
        quad += alpha[i] * u;
        loss += primal_loss(kind, y[i], u);
    }
    Ok(0.5 * quad + loss / lambda)
}

/// Primal objective minus the reported (maximization-form) dual.
pub fn duality_gap(kind: LossKind, lambda: f64, k: &[f64], y: &[f64], alpha: &[f64]) -> Result<f64> {
    Ok(primal_objective(kind, lambda, k, y, alpha)? + dual_objective(kind, lambda, k, y, alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn decision_rules() {
        assert_eq!(sign_label(0.0), 1.0);
        assert_eq!(sign_label(-1e-300), -1.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(3f64.ln()), 0.75, epsilon = 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert_eq!(ovr_argmax(&[vec![1.0, 0.0], vec![1.0, 2.0], vec![0.5, 2.0]]), vec![0, 1]);
    }

    #[test]
    fn singleton_objectives() {
        let k = [1.0];
        let y = [1.0];
        let d = dual_objective(LossKind::Square, 1.0, &k, &y, &[0.5]).unwrap();
        assert_relative_eq!(d, -0.25);
        let p = primal_objective(LossKind::Square, 1.0, &k, &y, &[0.5]).unwrap();
        assert_relative_eq!(p, 0.25);
        assert_relative_eq!(duality_gap(LossKind::Square, 1.0, &k, &y, &[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn zero_multipliers() {
        let k = [1.0, 0.2, 0.2, 1.0];
        let y = [0.5, -2.0];
        let lam = 0.5;
        assert_eq!(dual_objective(LossKind::Square, lam, &k, &y, &[0.0, 0.0]).unwrap(), 0.0);
        let want = 0.5 * (0.25 + 4.0) / lam;
        assert_relative_eq!(primal_objective(LossKind::Square, lam, &k, &y, &[0.0, 0.0]).unwrap(), want);
        assert_relative_eq!(duality_gap(LossKind::Square, lam, &k, &y, &[0.0, 0.0]).unwrap(), want);
    }

    #[test]
    fn infeasible_rejected() {
        assert!(dual_objective(LossKind::HingeL1, 1.0, &[1.0], &[1.0], &[2.0]).is_err());
    }

    #[test]
    fn mode_parses() {
        assert_eq!("inexact".parse::<Mode>().unwrap(), Mode::Inexact);
        assert!("fast".parse::<Mode>().is_err());
    }
}
