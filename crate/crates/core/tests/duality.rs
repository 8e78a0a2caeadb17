mod common;

use std::ops::ControlFlow;

use common::*;
use dualkern::data::{synth_make, Dataset, SynthKind};
use dualkern::kernels::{kernel_block, rff_sample, DenseRows, KernelSpec};
use dualkern::model::{self, Machine, Predictor};
use dualkern::solver::{FeatureBackend, PrimalEval, SolverConfig, Trainer};
use dualkern::{train_model, LossKind, Mode, TrainConfig};

fn problem(kind: LossKind, n: usize, seed: u64) -> Dataset {
    if kind.is_classification() {
        synth_make(SynthKind::TwoGaussians { separation: 2.0 }, n, 3, seed).unwrap()
    } else {
        synth_make(SynthKind::Sinusoid { noise: 0.2 }, n, 3, seed).unwrap()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn strong_duality_on_small_problems() {
    for kind in all_losses() {
        let ds = problem(kind, 150, 7);
        let x = ds.features.to_dense();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let k = kernel_block(&spec, &x, &x, 3).unwrap();
        let rows = DenseRows::new(&x, 3).unwrap();
        let cfg = SolverConfig { block_size: 50, ..Default::default() };
        let mut tr = Trainer::new(&rows, &ds.labels, kind, 0.7, FeatureBackend::Exact(spec), cfg).unwrap();
        tr.set_primal_eval(PrimalEval::Full);
        tr.run(3000, 0, |_, _| ControlFlow::Continue(())).unwrap();
        let obj = tr.objectives().unwrap();
        let a = &tr.state().alpha;
        let p = primal(kind, &k, &ds.labels, 0.7, a);
        let g = gap(kind, &k, &ds.labels, 0.7, a);
        assert!(g / (1.0 + p.abs()) <= 1e-4, "{kind}: gap {g} primal {p}");
        // the library's tracked values agree with the dense reference
        let lib_primal = obj.primal.unwrap();
        assert!((lib_primal - p).abs() <= 1e-8 * (1.0 + p.abs()), "{kind}: primal {lib_primal} vs {p}");
        let d = dual_min(kind, &k, &ds.labels, 0.7, a);
        assert!((obj.dual_min - d).abs() <= 1e-8 * (1.0 + d.abs()), "{kind}: dual {} vs {d}", obj.dual_min);
        let lib_gap = model::duality_gap(kind, 0.7, &k, &ds.labels, a).unwrap();
        assert!((lib_gap - g).abs() <= 1e-8 * (1.0 + p.abs()));
    }
}

#[test]
fn weak_duality_along_training() {
    for kind in all_losses() {
        for mode in [Mode::Exact, Mode::Inexact] {
            let ds = problem(kind, 200, 9);
            let cfg = TrainConfig {
                loss: kind,
                mode,
                rff_dim: 128,
                iterations: 60,
                block_size: Some(32),
                log_every: 3,
                primal_eval: PrimalEval::Full,
                ..Default::default()
            };
            let mut rows = 0;
            train_model(&cfg, &ds, None, &mut |r| {
                let p = r.primal_objective.unwrap();
                assert!(p >= r.dual_objective - 1e-8 * (1.0 + p.abs()), "{kind} {mode}: {p} < {}", r.dual_objective);
                rows += 1;
                ControlFlow::Continue(())
            })
            .unwrap();
            assert_eq!(rows, 20);
        }
    }
}

#[test]
fn exact_and_inexact_predictions_agree() {
    let ds = synth_make(SynthKind::Sinusoid { noise: 0.1 }, 500, 3, 13).unwrap();
    let test = synth_make(SynthKind::Sinusoid { noise: 0.1 }, 300, 3, 14).unwrap();
    let base = TrainConfig {
        loss: LossKind::Square,
        iterations: 30,
        rff_dim: 8192,
        block_size: Some(250),
        sigma: Some(1.0),
        ..Default::default()
    };
    let exact = train_model(&base, &ds, None, &mut |_| ControlFlow::Continue(())).unwrap();
    let inexact = train_model(&TrainConfig { mode: Mode::Inexact, ..base }, &ds, None, &mut |_| ControlFlow::Continue(())).unwrap();
    let a = exact.predict_raw(&test.features).unwrap();
    let b = inexact.predict_raw(&test.features).unwrap();
    let r = pearson(&a, &b);
    assert!(r >= 0.99, "correlation {r}");
}

#[test]
fn inexact_scores_are_feature_inner_products() {
    let ds = synth_make(SynthKind::TwoGaussians { separation: 2.0 }, 120, 4, 15).unwrap();
    let cfg = TrainConfig {
        loss: LossKind::HingeL1,
        mode: Mode::Inexact,
        rff_dim: 64,
        iterations: 20,
        zscore: false,
        sigma: Some(1.3),
        ..Default::default()
    };
    let m = train_model(&cfg, &ds, None, &mut |_| ControlFlow::Continue(())).unwrap();
    let Predictor::Double(Machine::Inexact { map, parts }) = &m.predictor else {
        panic!("expected an inexact double model");
    };
    // rebuild the map from its seed and check the stored arrays
    let again = rff_sample::<f64>(&KernelSpec::gaussian(1.3).unwrap(), 64, 4, m.meta.seeds.rff).unwrap();
    assert_eq!(again.w, map.w);
    assert_eq!(again.b, map.b);
    let theta = &parts[0].weights;
    let raw = m.predict_raw(&ds.features).unwrap();
    for i in 0..ds.len() {
        let x = ds.features.row_f64(i);
        let mut u = 0.0;
        for j in 0..64 {
            let arg: f64 = (0..4).map(|c| map.w[j * 4 + c] * x[c]).sum::<f64>() + map.b[j];
            u += theta[j] * (2.0f64 / 64.0).sqrt() * arg.cos();
        }
        assert!((u - raw[i]).abs() <= 1e-12 * (1.0 + u.abs()), "row {i}: {u} vs {}", raw[i]);
    }
}

#[test]
fn exact_scores_are_kernel_expansions() {
    let ds = synth_make(SynthKind::Sinusoid { noise: 0.1 }, 80, 2, 16).unwrap();
    let cfg = TrainConfig {
        loss: LossKind::Svr { epsilon: 0.1 },
        iterations: 30,
        zscore: false,
        sigma: Some(0.8),
        ..Default::default()
    };
    let m = train_model(&cfg, &ds, None, &mut |_| ControlFlow::Continue(())).unwrap();
    let Predictor::Double(Machine::Exact { parts, .. }) = &m.predictor else {
        panic!("expected an exact double model");
    };
    let alpha = &parts[0].weights;
    let x = ds.features.to_dense();
    let raw = m.predict_raw(&ds.features).unwrap();
    for i in 0..ds.len() {
        let u: f64 = (0..ds.len())
            .map(|j| {
                let d2 = (x[2 * i] - x[2 * j]).powi(2) + (x[2 * i + 1] - x[2 * j + 1]).powi(2);
                alpha[j] * (-d2 / (2.0 * 0.64)).exp()
            })
            .sum();
        assert!((u - raw[i]).abs() <= 1e-10 * (1.0 + u.abs()));
    }
}
