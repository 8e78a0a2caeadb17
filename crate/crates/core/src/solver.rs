//! Dual block coordinate descent with a trust-region inner solver.
//!
//! The outer loop picks one block of a fixed, shuffled partition uniformly at
//! random and approximately minimizes the dual restricted to that block,
//!
//! ```text
//! J(a_B) = 1/2 a_B^T K_BB a_B + a_Bc^T K_Bc,B a_B + f(a_B),  lo <= a_B <= hi,
//! ```
//!
//! with a trust-region method whose steps come from a truncated CG-Steihaug
//! iteration that stops at the radius or at the first box violation and then
//! projects back onto the box. In inexact mode the kernel is replaced by
//! random Fourier features and `theta = sum_i a_i psi(x_i)` is maintained so
//! `K_{B,:} a = psi(X_B)^T theta` costs `O(|B| M)`.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{exact_kernel_grad, kernel_block, KernelSpec, RffMap, RowSource};
use crate::losses::{primal_loss, DualBox, DualPenalty, LossKind};
use crate::real::{all_finite, axpy, dot, gemm_nt, matvec, norm2, quad_form, Real};

/// Inner trust-region settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    /// Largest trust radius.
    pub delta_max: f64,
    /// Acceptance threshold on the reduction ratio, in `[0, 1/4]`.
    pub eta: f64,
    /// Radius-expansion slack and CG residual tolerance (on `|r|^2`).
    pub tol: f64,
    pub max_tr_iters: usize,
    pub max_cg_iters: usize,
    /// Stop CG on a box violation without taking the violating step.
    pub literal_box_break: bool,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            delta_max: 1.0,
            eta: 0.1,
            tol: 1e-5,
            max_tr_iters: 50,
            max_cg_iters: 10,
            literal_box_break: false,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::param(format!("delta_max must be > 0, got {}", self.delta_max)));
        }
        if !(0.0..=0.25).contains(&self.eta) {
            return Err(Error::param(format!("eta must lie in [0, 0.25], got {}", self.eta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.max_tr_iters == 0 || self.max_cg_iters == 0 {
            return Err(Error::param("iteration caps must be >= 1"));
        }
        Ok(())
    }
}

/// Fixed partition of `0..n` into blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<usize>>,
    pub block_size: usize,
}

impl BlockPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Shuffles `0..n` with `seed` and cuts it into consecutive blocks of
/// `block_size`; the last block holds the remainder.
pub fn partition_blocks(n: usize, block_size: usize, seed: u64) -> Result<BlockPartition> {
    if block_size < 1 {
        return Err(Error::param("block size must be >= 1"));
    }
    if n == 0 {
        return Err(Error::param("cannot partition an empty index set"));
    }
    let block_size = block_size.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let blocks = idx.chunks(block_size).map(<[usize]>::to_vec).collect();
    Ok(BlockPartition { blocks, block_size })
}

/// Positive root `w` of `|s + w d| = delta`, assuming `|s| < delta`.
pub fn boundary_intersection<T: Real>(s: &[T], d: &[T], delta: T) -> Result<T> {
    let dd = dot(d, d);
    if !(dd > T::zero()) {
        return Err(Error::numerical("boundary intersection along a zero direction"));
    }
    let sd = dot(s, d);
    let c = dot(s, s) - delta * delta;
    let disc = (sd * sd - dd * c).max(T::zero()).sqrt();
    // stable form of (-sd + disc) / dd
    let w = if sd <= T::zero() {
        (disc - sd) / dd
    } else {
        -c / (sd + disc)
    };
    Ok(w.max(T::zero()))
}

fn model_value<T: Real>(q: &[T], g: &[T], s: &[T]) -> T {
    dot(g, s) + T::lit(0.5) * quad_form(q, s)
}

/// Largest `t >= 0` keeping `alpha + s + t d` inside `[lower, upper]`.
fn box_step_limit<T: Real>(alpha: &[T], s: &[T], d: &[T], lower: &[T], upper: &[T]) -> T {
    let mut t = T::infinity();
    for i in 0..d.len() {
        let cur = alpha[i] + s[i];
        if d[i] > T::zero() {
            t = t.min((upper[i] - cur) / d[i]);
        } else if d[i] < T::zero() {
            t = t.min((lower[i] - cur) / d[i]);
        }
    }
    t.max(T::zero())
}

/// Clamp `s_i` into `[lower - alpha, upper - alpha]` such that `alpha + s`
/// evaluates inside the box in floating point.
fn project_step<T: Real>(s: &mut [T], alpha: &[T], lower: &[T], upper: &[T]) {
    for i in 0..s.len() {
        let mut v = s[i].min(upper[i] - alpha[i]).max(lower[i] - alpha[i]);
        while alpha[i] + v > upper[i] {
            v = v.step_down();
        }
        while alpha[i] + v < lower[i] {
            v = v.step_up();
        }
        s[i] = v;
    }
}

/// Truncated CG-Steihaug on `min g^T s + 1/2 s^T Q s, |s| <= delta` with the
/// box `lower <= alpha + s <= upper`.
///
/// CG stops when the next iterate leaves the ball (it is cut at the boundary),
/// leaves the box (it is taken and the result projected onto the box), the
/// squared residual drops to `tol`, or after `max_iter` steps. A truncated
/// step is compared with the point where the last CG direction first meets
/// the box or the ball, and the one with the lower model value is returned,
/// so the model never increases.
#[allow(clippy::too_many_arguments)]
pub fn tcg_steihaug<T: Real>(
    q: &[T],
    g: &[T],
    alpha: &[T],
    upper: &[T],
    lower: &[T],
    delta: T,
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    tcg_steihaug_with(q, g, alpha, upper, lower, delta, tol, max_iter, false)
}

#[allow(clippy::too_many_arguments)]
pub fn tcg_steihaug_with<T: Real>(
    q: &[T],
    g: &[T],
    alpha: &[T],
    upper: &[T],
    lower: &[T],
    delta: T,
    tol: T,
    max_iter: usize,
    literal_box_break: bool,
) -> Result<Vec<T>> {
    let n = g.len();
    if q.len() != n * n || alpha.len() != n || upper.len() != n || lower.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: alpha.len(),
        });
    }
    if !all_finite(q) || !all_finite(g) || !all_finite(alpha) || !(delta > T::zero()) {
        return Err(Error::numerical("non-finite input to the CG-Steihaug step"));
    }
    let mut s = vec![T::zero(); n];
    let mut r: Vec<T> = g.iter().map(|&v| -v).collect();
    let mut d = r.clone();
    let mut r2 = dot(&r, &r);
    let mut qd = vec![T::zero(); n];
    // (last feasible iterate, its direction, step cap along it)
    let mut truncated: Option<(Vec<T>, Vec<T>, T)> = None;

    if r2 > T::zero() {
        for _ in 0..max_iter {
            matvec(q, n, n, &d, &mut qd);
            let dqd = dot(&d, &qd);
            if !(dqd > T::zero()) {
                // flat or negative curvature: follow d to the radius
                let w = boundary_intersection(&s, &d, delta)?;
                let prev = s.clone();
                axpy(w, &d, &mut s);
                truncated = Some((prev, d.clone(), w));
                break;
            }
            let w = r2 / dqd;
            let mut next = s.clone();
            axpy(w, &d, &mut next);
            if norm2(&next) > delta {
                let wb = boundary_intersection(&s, &d, delta)?;
                let prev = std::mem::replace(&mut s, next);
                s.copy_from_slice(&prev);
                axpy(wb, &d, &mut s);
                truncated = Some((prev, d.clone(), wb));
                break;
            }
            let violates = (0..n).any(|i| {
                let a = alpha[i] + next[i];
                a > upper[i] || a < lower[i]
            });
            if violates {
                if !literal_box_break {
                    let prev = std::mem::replace(&mut s, next);
                    truncated = Some((prev, d.clone(), w));
                }
                break;
            }
            s = next;
            axpy(-w, &qd, &mut r);
            let r2new = dot(&r, &r);
            if r2new <= tol {
                break;
            }
            let beta = r2new / r2;
            for (di, &ri) in d.iter_mut().zip(&r) {
                *di = ri + beta * *di;
            }
            r2 = r2new;
        }
    }

    project_step(&mut s, alpha, lower, upper);
    if let Some((prev, dir, cap)) = truncated {
        let t = cap.min(box_step_limit(alpha, &prev, &dir, lower, upper));
        let mut safe = prev;
        axpy(t, &dir, &mut safe);
        project_step(&mut safe, alpha, lower, upper);
        if norm2(&safe) <= delta && model_value(q, g, &safe) < model_value(q, g, &s) {
            s = safe;
        }
    }
    if model_value(q, g, &s) > T::zero() {
        s.iter_mut().for_each(|v| *v = T::zero());
    }
    Ok(s)
}

/// Radius update after a trust-region step with reduction ratio `rho`.
pub fn update_radius<T: Real>(rho: T, delta: T, step_norm: T, cfg: &TrustRegionConfig) -> T {
    if rho < T::lit(0.5) {
        delta / T::lit(4.0)
    } else if rho > T::lit(0.75) && delta - step_norm < T::lit(cfg.tol) {
        (delta * T::lit(2.0)).min(T::lit(cfg.delta_max))
    } else {
        delta
    }
}

/// The separable part of one block: labels and penalty.
#[derive(Debug, Clone, Copy)]
pub struct BlockLoss<'a, T> {
    pub penalty: &'a DualPenalty<T>,
    pub y: &'a [T],
}

/// Per-coordinate quadratic model data.
#[derive(Debug, Clone, Copy)]
struct CoordModel<T> {
    grad: T,
    hess: T,
    lower: T,
    upper: T,
}

impl<T: Real> BlockLoss<'_, T> {
    fn coord_model(&self, i: usize, a: T, kg: T) -> CoordModel<T> {
        let y = self.y[i];
        let bx = self.penalty.feasible_box(y);
        match self.penalty.kind() {
            LossKind::Svr { epsilon } => {
                // Linearize eps*|a| inside the current sign orthant so the
                // model is exact on the step box; a zero coordinate picks the
                // orthant its subgradient points into, or stays put.
                let e = T::lit(epsilon);
                let h = kg - y;
                let zero = T::zero();
                if a > zero {
                    CoordModel { grad: h + e, hess: zero, lower: bx.lower.max(zero), upper: bx.upper }
                } else if a < zero {
                    CoordModel { grad: h - e, hess: zero, lower: bx.lower, upper: bx.upper.min(zero) }
                } else if h + e < zero {
                    CoordModel { grad: h + e, hess: zero, lower: zero, upper: bx.upper }
                } else if h - e > zero {
                    CoordModel { grad: h - e, hess: zero, lower: bx.lower, upper: zero }
                } else {
                    CoordModel { grad: zero, hess: zero, lower: zero, upper: zero }
                }
            }
            _ => CoordModel {
                grad: kg + self.penalty.grad(y, a),
                hess: self.penalty.hess(y, a),
                lower: bx.lower,
                upper: bx.upper,
            },
        }
    }

    /// Actual change of coordinate `i`'s penalty under step `s` minus the
    /// change its quadratic model predicts. Zero for the quadratic and
    /// piecewise-linear penalties, whose models are exact on the step box.
    fn model_gap(&self, i: usize, a: T, s: T, hess: T) -> T {
        let kind = self.penalty.kind();
        if kind.is_quadratic() || kind.is_piecewise_linear() {
            return T::zero();
        }
        let y = self.y[i];
        self.penalty.delta(y, a, s) - self.penalty.grad(y, a) * s - T::lit(0.5) * hess * s * s
    }

    pub fn value(&self, alpha: &[T]) -> T {
        alpha
            .iter()
            .zip(self.y)
            .map(|(&a, &y)| self.penalty.value(y, a))
            .sum()
    }
}

/// Result of one block solve.
#[derive(Debug, Clone)]
pub struct TrOutcome<T> {
    pub alpha: Vec<T>,
    pub gbar: Vec<T>,
    /// Change of the block objective `J` (non-positive).
    pub objective_change: T,
    pub iterations: usize,
    pub accepted: usize,
    /// Reduction ratios of accepted steps.
    pub accepted_rhos: Vec<T>,
}

/// Trust-region minimization of the block objective starting from `alpha`,
/// with `gbar = K_{B,:} alpha` for the current global multipliers.
pub fn trust_region_solve<T: Real>(
    alpha: &[T],
    k_bb: &[T],
    gbar: &[T],
    loss: &BlockLoss<'_, T>,
    cfg: &TrustRegionConfig,
) -> Result<TrOutcome<T>> {
    let nb = alpha.len();
    if k_bb.len() != nb * nb || gbar.len() != nb || loss.y.len() != nb {
        return Err(Error::DimensionMismatch {
            expected: nb,
            actual: gbar.len(),
        });
    }
    let mut a = alpha.to_vec();
    let mut gb = gbar.to_vec();
    let mut delta = T::lit(cfg.delta_max) / T::lit(4.0);
    let mut total = T::zero();
    let mut out = TrOutcome {
        alpha: Vec::new(),
        gbar: Vec::new(),
        objective_change: T::zero(),
        iterations: 0,
        accepted: 0,
        accepted_rhos: Vec::new(),
    };

    let mut free: Vec<usize> = Vec::with_capacity(nb);
    let mut q = Vec::with_capacity(nb * nb);
    let mut g = Vec::with_capacity(nb);
    let mut af = Vec::with_capacity(nb);
    let mut lo = Vec::with_capacity(nb);
    let mut hi = Vec::with_capacity(nb);
    let mut s = vec![T::zero(); nb];
    let mut ks = vec![T::zero(); nb];

    for _ in 0..cfg.max_tr_iters {
        out.iterations += 1;
        free.clear();
        g.clear();
        af.clear();
        lo.clear();
        hi.clear();
        let mut hdiag = Vec::with_capacity(nb);
        for i in 0..nb {
            let m = loss.coord_model(i, a[i], gb[i]);
            let pinned = m.lower >= m.upper
                || (a[i] <= m.lower && m.grad >= T::zero())
                || (a[i] >= m.upper && m.grad <= T::zero());
            if pinned {
                continue;
            }
            free.push(i);
            g.push(m.grad);
            af.push(a[i]);
            lo.push(m.lower);
            hi.push(m.upper);
            hdiag.push(m.hess);
        }
        if free.is_empty() || g.iter().all(|v| *v == T::zero()) {
            break;
        }
        let nf = free.len();
        q.clear();
        for (r, &i) in free.iter().enumerate() {
            for &j in &free {
                q.push(k_bb[i * nb + j]);
            }
            q[r * nf + r] += hdiag[r];
        }
        let sf = tcg_steihaug_with(
            &q,
            &g,
            &af,
            &hi,
            &lo,
            delta,
            T::lit(cfg.tol),
            cfg.max_cg_iters,
            cfg.literal_box_break,
        )?;
        let step_norm = norm2(&sf);
        let pred = -model_value(&q, &g, &sf);

        s.iter_mut().for_each(|v| *v = T::zero());
        for (k, &i) in free.iter().enumerate() {
            s[i] = sf[k];
        }
        matvec(k_bb, nb, nb, &s, &mut ks);
        // actual change of J: the kernel part matches the model exactly, so
        // only the separable part's departure from its quadratic model is added
        let mut dj = -pred;
        for (k, &i) in free.iter().enumerate() {
            if sf[k] != T::zero() {
                dj += loss.model_gap(i, a[i], sf[k], hdiag[k]);
            }
        }
        if !dj.is_finite() || !pred.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite block objective (change {dj}, predicted {pred}) for {}",
                loss.penalty.kind()
            )));
        }

        // rounding scale of the terms that make up pred and dj
        let mut scale = quad_form(&q, &sf).abs() + dot(&s, &ks).abs();
        for k in 0..nf {
            scale += (g[k] * sf[k]).abs();
        }
        for i in 0..nb {
            if s[i] != T::zero() {
                scale += (gb[i] * s[i]).abs() + loss.penalty.delta_scale(loss.y[i], a[i], s[i]);
            }
        }
        let guard = T::lit(1e-14).max(T::lit(16.0) * T::epsilon()) * scale;
        if pred <= guard {
            delta = delta / T::lit(4.0);
        } else {
            let rho = -dj / pred;
            delta = update_radius(rho, delta, step_norm, cfg);
            if rho > T::lit(cfg.eta) {
                for i in 0..nb {
                    a[i] += s[i];
                }
                axpy(T::one(), &ks, &mut gb);
                total += dj;
                out.accepted += 1;
                out.accepted_rhos.push(rho);
            }
        }
        // steps below this cannot move any multiplier
        let floor = T::epsilon() * (T::one() + norm2(&a));
        if delta < floor {
            break;
        }
    }
    out.alpha = a;
    out.gbar = gb;
    out.objective_change = total;
    Ok(out)
}

/// Exact kernel or sampled random feature map.
#[derive(Debug, Clone)]
pub enum FeatureBackend<T> {
    Exact(KernelSpec),
    Inexact(RffMap<T>),
}

impl<T: Real> FeatureBackend<T> {
    pub fn kernel(&self) -> &KernelSpec {
        match self {
            FeatureBackend::Exact(k) => k,
            FeatureBackend::Inexact(m) => &m.spec,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, FeatureBackend::Exact(_))
    }
}

/// How the primal objective is evaluated for monitoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimalEval {
    Off,
    /// Loss term over a fixed random subsample, rescaled to `n`.
    Subsample(usize),
    Full,
}

impl Default for PrimalEval {
    fn default() -> Self {
        PrimalEval::Subsample(4096)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub trust_region: TrustRegionConfig,
    pub block_size: usize,
    pub seed: u64,
    /// Columns per chunk when streaming `K_{B,:} alpha` in exact mode.
    pub chunk: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            trust_region: TrustRegionConfig::default(),
            block_size: 512,
            seed: 0,
            chunk: 4096,
        }
    }
}

impl SolverConfig {
    /// Block-size default per loss: 1024 for logistic, 512 otherwise.
    pub fn default_block_size(kind: LossKind) -> usize {
        match kind {
            LossKind::Logistic => 1024,
            _ => 512,
        }
    }
}

/// Multipliers, optional maintained weight vector and selection state.
#[derive(Debug, Clone)]
pub struct DualState<T> {
    pub alpha: Vec<T>,
    pub theta: Option<Vec<T>>,
    pub partition: BlockPartition,
    pub iteration: usize,
    rng: ChaCha8Rng,
}

impl<T> DualState<T> {
    pub fn new(alpha: Vec<T>, theta: Option<Vec<T>>, partition: BlockPartition, seed: u64) -> Self {
        DualState {
            alpha,
            theta,
            partition,
            iteration: 0,
            // decorrelated from the partition shuffle
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }
}

/// Uniformly random block index; advances the state's generator.
pub fn select_block<T>(state: &mut DualState<T>) -> usize {
    let m = state.partition.len();
    if m <= 1 {
        return 0;
    }
    state.rng.random_range(0..m)
}

/// Objective values at the current iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objectives {
    /// Minimization-form dual `1/2 a^T K a + sum_i f_i(a_i)`.
    pub dual_min: f64,
    pub primal: Option<f64>,
}

impl Objectives {
    /// Maximization-form dual, as reported in logs.
    pub fn dual(&self) -> f64 {
        -self.dual_min
    }

    pub fn gap(&self) -> Option<f64> {
        self.primal.map(|p| p - self.dual())
    }
}

/// What a progress callback sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub dual_objective: f64,
    pub primal_objective: Option<f64>,
    pub duality_gap: Option<f64>,
}

/// Owns the optimization state for one training run.
pub struct Trainer<'a, T: Real> {
    x: &'a (dyn RowSource<T> + 'a),
    y: Vec<T>,
    penalty: DualPenalty<T>,
    backend: FeatureBackend<T>,
    config: SolverConfig,
    state: DualState<T>,
    dual_min: f64,
    primal_rows: Option<Vec<usize>>,
    primal_eval: PrimalEval,
    theta_carry: Vec<T>,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(
        x: &'a (dyn RowSource<T> + 'a),
        y: &[f64],
        loss: LossKind,
        lambda: f64,
        backend: FeatureBackend<T>,
        config: SolverConfig,
    ) -> Result<Self> {
        config.trust_region.validate()?;
        let n = x.n_rows();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: y.len(),
            });
        }
        if n == 0 {
            return Err(Error::Data("empty training set".into()));
        }
        if let FeatureBackend::Inexact(map) = &backend {
            if map.dim != x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: map.dim,
                    actual: x.dim(),
                });
            }
        }
        if loss.is_classification() {
            if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
                return Err(Error::Data(format!(
                    "{loss} needs labels in {{-1, +1}}, found {bad}"
                )));
            }
        }
        let penalty = DualPenalty::new(loss, T::lit(lambda))?;
        let y: Vec<T> = y.iter().map(|&v| T::lit(v)).collect();
        let alpha: Vec<T> = y.iter().map(|&yi| penalty.initial(yi)).collect();
        let partition = partition_blocks(n, config.block_size, config.seed)?;
        let mut trainer = Trainer {
            x,
            y,
            penalty,
            backend,
            config,
            state: DualState::new(alpha, None, partition, config.seed),
            dual_min: 0.0,
            primal_rows: None,
            primal_eval: PrimalEval::Off,
            theta_carry: Vec::new(),
        };
        if let FeatureBackend::Inexact(map) = &trainer.backend {
            trainer.state.theta = Some(weight_vector(map, x, &trainer.state.alpha)?);
        }
        trainer.dual_min = trainer.recompute_dual()?;
        Ok(trainer)
    }

    pub fn set_primal_eval(&mut self, policy: PrimalEval) {
        self.primal_eval = policy;
        self.primal_rows = match policy {
            PrimalEval::Subsample(k) if k < self.y.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(17));
                let mut v = rand::seq::index::sample(&mut rng, self.y.len(), k.max(1)).into_vec();
                v.sort_unstable();
                Some(v)
            }
            _ => None,
        };
    }

    pub fn state(&self) -> &DualState<T> {
        &self.state
    }

    pub fn into_state(self) -> DualState<T> {
        self.state
    }

    pub fn backend(&self) -> &FeatureBackend<T> {
        &self.backend
    }

    pub fn penalty(&self) -> &DualPenalty<T> {
        &self.penalty
    }

    pub fn labels(&self) -> &[T] {
        &self.y
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn rows(&self) -> &'a (dyn RowSource<T> + 'a) {
        self.x
    }

    /// Tracked minimization-form dual objective.
    pub fn dual_min(&self) -> f64 {
        self.dual_min
    }

    /// Block gram matrix and `K_{B,:} alpha` for the given indices.
    fn block_system(&self, idx: &[usize]) -> Result<(Vec<T>, Vec<T>, Option<Vec<T>>)> {
        let d = self.x.dim();
        let xb = self.x.gather_vec(idx);
        let nb = idx.len();
        match &self.backend {
            FeatureBackend::Exact(spec) => {
                let kbb = kernel_block(spec, &xb, &xb, d)?;
                let gbar = exact_kernel_grad(spec, self.x, &self.state.alpha, idx, self.config.chunk)?;
                Ok((kbb, gbar, None))
            }
            FeatureBackend::Inexact(map) => {
                let z = map.map(&xb)?;
                let m = map.n_features;
                let mut kbb = vec![T::zero(); nb * nb];
                gemm_nt(nb, m, nb, &z, &z, &mut kbb);
                let theta = self.state.theta.as_ref().expect("inexact state keeps theta");
                let mut gbar = vec![T::zero(); nb];
                matvec(&z, nb, m, theta, &mut gbar);
                Ok((kbb, gbar, Some(z)))
            }
        }
    }

    /// One outer iteration on block `b`.
    pub fn step_block(&mut self, b: usize) -> Result<TrOutcome<T>> {
        let idx = self.state.partition.blocks[b].clone();
        let (kbb, gbar, z) = self.block_system(&idx)?;
        let alpha_b: Vec<T> = idx.iter().map(|&i| self.state.alpha[i]).collect();
        let y_b: Vec<T> = idx.iter().map(|&i| self.y[i]).collect();
        let loss = BlockLoss {
            penalty: &self.penalty,
            y: &y_b,
        };
        let out = trust_region_solve(&alpha_b, &kbb, &gbar, &loss, &self.config.trust_region)?;
        if !all_finite(&out.alpha) {
            return Err(Error::numerical(format!(
                "non-finite multiplier after iteration {}",
                self.state.iteration + 1
            )));
        }
        if let (Some(z), Some(theta)) = (z, self.state.theta.as_mut()) {
            let m = theta.len();
            let mut upd = vec![T::zero(); m];
            for (r, (&new, &old)) in out.alpha.iter().zip(&alpha_b).enumerate() {
                let da = new - old;
                if da != T::zero() {
                    axpy(da, &z[r * m..(r + 1) * m], &mut upd);
                }
            }
            // compensated sum keeps theta's drift independent of the number of updates
            self.theta_carry.resize(m, T::zero());
            for ((t, c), &u) in theta.iter_mut().zip(self.theta_carry.iter_mut()).zip(&upd) {
                let v = u - *c;
                let sum = *t + v;
                *c = (sum - *t) - v;
                *t = sum;
            }
        }
        for (k, &i) in idx.iter().enumerate() {
            self.state.alpha[i] = out.alpha[k];
        }
        self.dual_min += out.objective_change.f64();
        self.state.iteration += 1;
        Ok(out)
    }

    /// One outer iteration on a uniformly chosen block.
    pub fn step(&mut self) -> Result<TrOutcome<T>> {
        let b = select_block(&mut self.state);
        self.step_block(b)
    }

    /// Recomputes the minimization-form dual from scratch.
    pub fn recompute_dual(&self) -> Result<f64> {
        let pen: f64 = self
            .state
            .alpha
            .iter()
            .zip(&self.y)
            .map(|(&a, &y)| self.penalty.value(y, a).f64())
            .sum();
        let quad = match (&self.backend, &self.state.theta) {
            (FeatureBackend::Inexact(_), Some(theta)) => {
                0.5 * theta.iter().map(|v| v.f64() * v.f64()).sum::<f64>()
            }
            (FeatureBackend::Exact(spec), _) => {
                let all: Vec<usize> = (0..self.y.len()).collect();
                let ka = exact_kernel_grad(spec, self.x, &self.state.alpha, &all, self.config.chunk)?;
                0.5 * ka
                    .iter()
                    .zip(&self.state.alpha)
                    .map(|(u, a)| u.f64() * a.f64())
                    .sum::<f64>()
            }
            (FeatureBackend::Inexact(_), None) => unreachable!("inexact state keeps theta"),
        };
        let v = quad + pen;
        if !v.is_finite() {
            return Err(Error::numerical("non-finite dual objective"));
        }
        Ok(v)
    }

    /// Decision values `u_i = <theta, phi(x_i)>` at the given training rows.
    fn training_scores(&self, rows: &[usize]) -> Result<Vec<f64>> {
        match &self.backend {
            FeatureBackend::Exact(spec) => {
                let u = exact_kernel_grad(spec, self.x, &self.state.alpha, rows, self.config.chunk)?;
                Ok(u.into_iter().map(Real::f64).collect())
            }
            FeatureBackend::Inexact(map) => {
                let theta = self.state.theta.as_ref().expect("inexact state keeps theta");
                let mut out = Vec::with_capacity(rows.len());
                for chunk in rows.chunks(1024) {
                    let z = map.map(&self.x.gather_vec(chunk))?;
                    let m = map.n_features;
                    out.extend((0..chunk.len()).map(|r| dot(&z[r * m..(r + 1) * m], theta).f64()));
                }
                Ok(out)
            }
        }
    }

    /// Scores for arbitrary rows under the current multipliers.
    pub fn predict_rows(&self, x: &dyn RowSource<T>) -> Result<Vec<f64>> {
        if x.dim() != self.x.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.x.dim(),
                actual: x.dim(),
            });
        }
        let n = x.n_rows();
        let d = x.dim();
        let mut out = Vec::with_capacity(n);
        match &self.backend {
            FeatureBackend::Exact(spec) => {
                let all: Vec<usize> = (0..self.y.len()).collect();
                let xt = self.x.gather_vec(&all);
                for start in (0..n).step_by(256) {
                    let rows: Vec<usize> = (start..(start + 256).min(n)).collect();
                    let xq = x.gather_vec(&rows);
                    let k = kernel_block(spec, &xq, &xt, d)?;
                    let nt = all.len();
                    out.extend((0..rows.len()).map(|r| {
                        dot(&k[r * nt..(r + 1) * nt], &self.state.alpha).f64()
                    }));
                }
            }
            FeatureBackend::Inexact(map) => {
                let theta = self.state.theta.as_ref().expect("inexact state keeps theta");
                let m = map.n_features;
                for start in (0..n).step_by(1024) {
                    let rows: Vec<usize> = (start..(start + 1024).min(n)).collect();
                    let z = map.map(&x.gather_vec(&rows))?;
                    out.extend((0..rows.len()).map(|r| dot(&z[r * m..(r + 1) * m], theta).f64()));
                }
            }
        }
        Ok(out)
    }

    /// Current objectives. The primal is evaluated according to the active
    /// [`PrimalEval`] policy; the exact-mode dual is the tracked value.
    pub fn objectives(&self) -> Result<Objectives> {
        let dual_min = match self.backend {
            FeatureBackend::Inexact(_) => self.recompute_dual()?,
            FeatureBackend::Exact(_) => self.dual_min,
        };
        let primal = match self.primal_eval {
            PrimalEval::Off => None,
            PrimalEval::Full | PrimalEval::Subsample(_) => Some(self.primal_objective(dual_min)?),
        };
        Ok(Objectives { dual_min, primal })
    }

    fn primal_objective(&self, dual_min: f64) -> Result<f64> {
        let n = self.y.len();
        let lambda = self.penalty.lambda().f64();
        let kind = self.penalty.kind();
        let pen: f64 = self
            .state
            .alpha
            .iter()
            .zip(&self.y)
            .map(|(&a, &y)| self.penalty.value(y, a).f64())
            .sum();
        let loss_sum = |rows: &[usize], u: &[f64]| -> f64 {
            rows.iter()
                .zip(u)
                .map(|(&i, &ui)| primal_loss(kind, self.y[i].f64(), ui))
                .sum::<f64>()
        };
        match &self.primal_rows {
            Some(rows) => {
                let u = self.training_scores(rows)?;
                let quad = match &self.state.theta {
                    Some(theta) => 0.5 * theta.iter().map(|v| v.f64() * v.f64()).sum::<f64>(),
                    None => dual_min - pen,
                };
                let scale = n as f64 / rows.len() as f64;
                Ok(quad + scale * loss_sum(rows, &u) / lambda)
            }
            None => {
                let all: Vec<usize> = (0..n).collect();
                let u = self.training_scores(&all)?;
                let quad = match &self.state.theta {
                    Some(theta) => 0.5 * theta.iter().map(|v| v.f64() * v.f64()).sum::<f64>(),
                    None => {
                        0.5 * u
                            .iter()
                            .zip(&self.state.alpha)
                            .map(|(ui, a)| ui * a.f64())
                            .sum::<f64>()
                    }
                };
                Ok(quad + loss_sum(&all, &u) / lambda)
            }
        }
    }

    /// Runs `iters` outer iterations, calling `monitor` every `every`
    /// iterations (and after the last one). The callback may stop early.
    pub fn run<F>(&mut self, iters: usize, every: usize, mut monitor: F) -> Result<()>
    where
        F: FnMut(&Progress, &Self) -> ControlFlow<()>,
    {
        let every = every.max(1);
        for t in 1..=iters {
            self.step()?;
            if t % every == 0 || t == iters {
                let obj = self.objectives()?;
                let progress = Progress {
                    iteration: self.state.iteration,
                    dual_objective: obj.dual(),
                    primal_objective: obj.primal,
                    duality_gap: obj.gap(),
                };
                if monitor(&progress, self).is_break() {
                    break;
                }
            }
        }
        Ok(())
    }
}

/// `theta = sum_i alpha_i psi(x_i)`, accumulated in row order.
pub fn weight_vector<T: Real>(map: &RffMap<T>, x: &dyn RowSource<T>, alpha: &[T]) -> Result<Vec<T>> {
    let n = x.n_rows();
    if alpha.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: alpha.len(),
        });
    }
    let m = map.n_features;
    let mut theta = vec![T::zero(); m];
    for start in (0..n).step_by(1024) {
        let rows: Vec<usize> = (start..(start + 1024).min(n)).collect();
        let z = map.map(&x.gather_vec(&rows))?;
        for (r, &i) in rows.iter().enumerate() {
            if alpha[i] != T::zero() {
                axpy(alpha[i], &z[r * m..(r + 1) * m], &mut theta);
            }
        }
    }
    Ok(theta)
}

/// Runs `iters` outer iterations of dual block coordinate descent and
/// returns the final state.
#[allow(clippy::too_many_arguments)]
pub fn dbcd_train<T: Real, F>(
    x: &dyn RowSource<T>,
    y: &[f64],
    loss: LossKind,
    lambda: f64,
    backend: FeatureBackend<T>,
    config: SolverConfig,
    iters: usize,
    every: usize,
    monitor: F,
) -> Result<DualState<T>>
where
    F: FnMut(&Progress, &Trainer<'_, T>) -> ControlFlow<()>,
{
    let mut trainer = Trainer::new(x, y, loss, lambda, backend, config)?;
    trainer.run(iters, every, monitor)?;
    Ok(trainer.into_state())
}

/// Per-coordinate boxes the solver enforces (safeguarded for logistic).
pub fn feasible_boxes<T: Real>(penalty: &DualPenalty<T>, y: &[T]) -> Vec<DualBox<T>> {
    y.iter().map(|&yi| penalty.feasible_box(yi)).collect()
}
