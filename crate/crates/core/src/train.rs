//! End-to-end training: normalization, bandwidth selection, precision
//! dispatch, one-vs-rest composition and progress reporting.

use std::ops::ControlFlow;
use std::time::Instant;

use log::info;

use crate::data::{zscore_fit, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{median_heuristic, rff_sample, KernelFamily, KernelSpec, NormalizedRows, RowSource, MEDIAN_SUBSAMPLE};
use crate::losses::{primal_loss, LossKind};
use crate::metrics;
use crate::model::{sign_label, Machine, Mode, ModelMeta, Part, PartSummary, Predictor, Seeds, TrainedModel};
use crate::real::{Precision, Real};
use crate::solver::{FeatureBackend, PrimalEval, SolverConfig, Trainer, TrustRegionConfig};

/// All training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lambda: f64,
    pub mode: Mode,
    pub kernel: KernelFamily,
    /// Bandwidth; `None` selects the median heuristic.
    pub sigma: Option<f64>,
    /// Number of random features in inexact mode.
    pub rff_dim: usize,
    /// `None` picks the per-loss default.
    pub block_size: Option<usize>,
    pub iterations: usize,
    pub trust_region: TrustRegionConfig,
    pub seeds: Seeds,
    pub precision: Precision,
    pub zscore: bool,
    /// Report progress every this many outer iterations.
    pub log_every: usize,
    pub primal_eval: PrimalEval,
    /// Column chunk for exact kernel products.
    pub chunk: usize,
    /// Validation rows used for the progress metric.
    pub max_val_rows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Square,
            lambda: 1.0,
            mode: Mode::Exact,
            kernel: KernelFamily::Gaussian,
            sigma: None,
            rff_dim: 1024,
            block_size: None,
            iterations: 1000,
            trust_region: TrustRegionConfig::default(),
            seeds: Seeds::default(),
            precision: Precision::Double,
            zscore: true,
            log_every: 100,
            primal_eval: PrimalEval::default(),
            chunk: 4096,
            max_val_rows: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param(format!("sigma must be > 0, got {s}")));
            }
        }
        if self.mode == Mode::Inexact && self.rff_dim == 0 {
            return Err(Error::param("inexact mode needs at least one random feature"));
        }
        if self.block_size == Some(0) {
            return Err(Error::param("block size must be >= 1"));
        }
        if self.chunk == 0 {
            return Err(Error::param("chunk must be >= 1"));
        }
        self.trust_region.validate()
    }

    pub fn effective_block_size(&self) -> usize {
        self.block_size
            .unwrap_or_else(|| SolverConfig::default_block_size(self.loss))
    }
}

/// One progress report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// Class index for one-vs-rest models, 0 otherwise.
    pub part: usize,
    pub iteration: usize,
    pub wall_seconds: f64,
    pub dual_objective: f64,
    pub primal_objective: Option<f64>,
    pub duality_gap: Option<f64>,
    /// Mean primal loss on the validation rows.
    pub val_loss: Option<f64>,
    /// Accuracy (classification) or RMSE (regression) on the validation rows.
    pub val_metric: Option<f64>,
}

/// Per-problem training targets: `+-1` for classification, raw for regression.
fn targets(loss: LossKind, labels: &[f64], classes: &[f64]) -> Vec<Vec<f64>> {
    if !loss.is_classification() {
        return vec![labels.to_vec()];
    }
    let positive: Vec<f64> = if classes.len() == 2 {
        vec![classes[1]]
    } else {
        classes.to_vec()
    };
    positive
        .iter()
        .map(|&c| labels.iter().map(|&y| if y == c { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// Trains a model on `train`, reporting progress through `on_log`. Returning
/// `Break` from the callback stops the current problem early.
pub fn train_model(
    cfg: &TrainConfig,
    train: &Dataset,
    validation: Option<&Dataset>,
    on_log: &mut dyn FnMut(&LogRow) -> ControlFlow<()>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if let Some(v) = validation {
        if v.dim() != train.dim() {
            return Err(Error::DimensionMismatch {
                expected: train.dim(),
                actual: v.dim(),
            });
        }
    }
    let classes = if cfg.loss.is_classification() {
        let c = train.classes();
        if c.len() < 2 {
            return Err(Error::DegenerateData(format!(
                "classification needs at least two classes, found {}",
                c.len()
            )));
        }
        c
    } else {
        Vec::new()
    };
    let zscore = cfg.zscore.then(|| zscore_fit(&train.features));
    let rows = NormalizedRows {
        features: &train.features,
        zscore: zscore.as_ref(),
    };
    let (sigma, from_median) = match cfg.sigma {
        Some(s) => (s, false),
        None => {
            let s = median_heuristic(&rows, MEDIAN_SUBSAMPLE, cfg.seeds.partition, cfg.kernel)?;
            info!("median heuristic bandwidth {s}");
            (s, true)
        }
    };
    let kernel = KernelSpec::new(cfg.kernel, sigma)?;
    let ys = targets(cfg.loss, &train.labels, &classes);

    let val = validation.map(|v| {
        let k = v.len().min(cfg.max_val_rows);
        let idx: Vec<usize> = (0..k).collect();
        let sub = v.select(&idx);
        let ys = targets(cfg.loss, &sub.labels, &classes);
        (sub, ys)
    });
    let val_view = val.as_ref().map(|(d, ys)| {
        (
            NormalizedRows {
                features: &d.features,
                zscore: zscore.as_ref(),
            },
            ys.as_slice(),
        )
    });

    let (predictor, parts) = match cfg.precision {
        Precision::Single => {
            let (m, p) = fit::<f32>(cfg, &kernel, &rows, &ys, val_view, on_log)?;
            (Predictor::Single(m), p)
        }
        Precision::Double => {
            let (m, p) = fit::<f64>(cfg, &kernel, &rows, &ys, val_view, on_log)?;
            (Predictor::Double(m), p)
        }
    };
    Ok(TrainedModel {
        meta: ModelMeta {
            loss: cfg.loss,
            lambda: cfg.lambda,
            mode: cfg.mode,
            kernel,
            sigma_from_median: from_median,
            precision: cfg.precision,
            rff_dim: (cfg.mode == Mode::Inexact).then_some(cfg.rff_dim),
            seeds: cfg.seeds,
            block_size: cfg.effective_block_size(),
            requested_iterations: cfg.iterations,
            dim: train.dim(),
            n_train: train.len(),
            classes,
            parts,
        },
        zscore,
        predictor,
    })
}

fn validation_stats<T: Real>(
    loss: LossKind,
    trainer: &Trainer<'_, T>,
    rows: &NormalizedRows<'_>,
    y: &[f64],
) -> Result<(f64, f64)> {
    let u = trainer.predict_rows(rows)?;
    let mean_loss = u.iter().zip(y).map(|(&ui, &yi)| primal_loss(loss, yi, ui)).sum::<f64>() / y.len().max(1) as f64;
    let metric = if loss.is_classification() {
        let pred: Vec<f64> = u.iter().map(|&v| sign_label(v)).collect();
        metrics::accuracy(&pred, y)?
    } else {
        metrics::rmse(&u, y)?
    };
    Ok((mean_loss, metric))
}

fn fit<T: Real>(
    cfg: &TrainConfig,
    kernel: &KernelSpec,
    rows: &NormalizedRows<'_>,
    ys: &[Vec<f64>],
    val: Option<(NormalizedRows<'_>, &[Vec<f64>])>,
    on_log: &mut dyn FnMut(&LogRow) -> ControlFlow<()>,
) -> Result<(Machine<T>, Vec<PartSummary>)> {
    let d = RowSource::<T>::dim(rows);
    let backend = match cfg.mode {
        Mode::Exact => FeatureBackend::Exact(*kernel),
        Mode::Inexact => FeatureBackend::Inexact(rff_sample::<T>(kernel, cfg.rff_dim, d, cfg.seeds.rff)?),
    };
    let solver_cfg = SolverConfig {
        trust_region: cfg.trust_region,
        block_size: cfg.effective_block_size(),
        seed: cfg.seeds.partition,
        chunk: cfg.chunk,
    };
    let mut parts = Vec::with_capacity(ys.len());
    let mut summaries = Vec::with_capacity(ys.len());
    for (c, y) in ys.iter().enumerate() {
        let mut trainer = Trainer::new(rows, y, cfg.loss, cfg.lambda, backend.clone(), solver_cfg)?;
        trainer.set_primal_eval(cfg.primal_eval);
        let start = Instant::now();
        let mut failure = None;
        trainer.run(cfg.iterations, cfg.log_every, |p, tr| {
            let (val_loss, val_metric) = match &val {
                Some((vrows, vys)) => match validation_stats(cfg.loss, tr, vrows, &vys[c]) {
                    Ok((l, m)) => (Some(l), Some(m)),
                    Err(e) => {
                        failure = Some(e);
                        return ControlFlow::Break(());
                    }
                },
                None => (None, None),
            };
            on_log(&LogRow {
                part: c,
                iteration: p.iteration,
                wall_seconds: start.elapsed().as_secs_f64(),
                dual_objective: p.dual_objective,
                primal_objective: p.primal_objective,
                duality_gap: p.duality_gap,
                val_loss,
                val_metric,
            })
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let obj = trainer.objectives()?;
        summaries.push(PartSummary {
            iterations: trainer.state().iteration,
            dual_objective: obj.dual(),
            primal_objective: obj.primal,
            duality_gap: obj.gap(),
        });
        let state = trainer.into_state();
        let labels = match cfg.mode {
            Mode::Exact => y.iter().map(|&v| T::lit(v)).collect(),
            Mode::Inexact => Vec::new(),
        };
        let weights = match state.theta {
            Some(theta) => theta,
            None => state.alpha,
        };
        parts.push(Part { weights, labels });
    }
    let machine = match backend {
        FeatureBackend::Exact(_) => {
            let all: Vec<usize> = (0..RowSource::<T>::n_rows(rows)).collect();
            Machine::Exact {
                support: RowSource::<T>::gather_vec(rows, &all),
                parts,
            }
        }
        FeatureBackend::Inexact(map) => Machine::Inexact { map, parts },
    };
    Ok((machine, summaries))
}

/// Validation score of a trained model; higher is better.
pub fn validation_score(model: &TrainedModel, data: &Dataset) -> Result<f64> {
    if model.meta.loss.is_classification() {
        metrics::accuracy(&model.predict_label(&data.features)?, &data.labels)
    } else {
        Ok(-metrics::rmse(&model.predict_raw(&data.features)?, &data.labels)?)
    }
}

/// The grid `{2^i : i = -7..=7}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-7..=7).map(|i| 2f64.powi(i)).collect()
}

/// Trains once per `lambda` and keeps the model with the best validation
/// score (first one on ties). Returns the scores alongside.
pub fn lambda_grid_search(
    cfg: &TrainConfig,
    train: &Dataset,
    validation: &Dataset,
    grid: &[f64],
) -> Result<(TrainedModel, Vec<(f64, f64)>)> {
    let mut best: Option<(f64, TrainedModel)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let c = TrainConfig { lambda, ..cfg.clone() };
        let model = train_model(&c, train, Some(validation), &mut |_| ControlFlow::Continue(()))?;
        let s = validation_score(&model, validation)?;
        info!("lambda {lambda}: validation score {s}");
        scores.push((lambda, s));
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, model));
        }
    }
    best.map(|(_, m)| (m, scores))
        .ok_or_else(|| Error::param("empty lambda grid"))
}

