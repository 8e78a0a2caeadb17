//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.

mod common;

use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use dualkern::data::{synth_make, write_libsvm, Dataset, SynthKind};
use dualkern::kernels::{kernel_block, median_heuristic, rff_sample, DenseRows, KernelFamily, KernelSpec, MEDIAN_SUBSAMPLE};
use dualkern::losses::{conjugate_eval, primal_loss};
use dualkern::metrics::accuracy;
use dualkern::solver::{tcg_steihaug, weight_vector, FeatureBackend, PrimalEval, SolverConfig, Trainer};
use dualkern::{train_model, LossKind, Mode, Precision, TrainConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// tolerances
const KRR_REL_TOL: f64 = 1e-4;
const KRR_MAX_ITERS: usize = 20;
const KRR_SECONDS: f64 = 10.0;
const GAP_REL_TOL: f64 = 1e-3;
const GAP_MAX_ITERS: usize = 2000;
const GAP_SECONDS: f64 = 60.0;
const ORACLE_ALPHA_TOL: f64 = 1e-4;
const ORACLE_GAP: f64 = 1e-8;
const DESCENT_SLACK: f64 = 1e-10;
const DESCENT_ITERS: usize = 2000;
const FY_TOL: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-5;
const CONJ_PAIRS: usize = 1000;
const TCG_INSTANCES: usize = 1000;
const TCG_SLACK: f64 = 1e-12;
const NEWTON_TOL: f64 = 1e-8;
const RFF_SEEDS: u64 = 10;
const RFF_PAIRS: usize = 1000;
const THETA_ITERS: usize = 5000;
const THETA_TOL: f64 = 1e-5;
const SANITY_ACCURACY: f64 = 0.95;
const SANITY_MAX_ITERS: usize = 2000;
const SANITY_SECONDS: f64 = 120.0;

type Outcome = Result<String, String>;

fn gaussian_kernel(x: &[f64], d: usize) -> (KernelSpec, Vec<f64>) {
    let rows = DenseRows::new(x, d).unwrap();
    let sigma = median_heuristic(&rows, MEDIAN_SUBSAMPLE, 0, KernelFamily::Gaussian).unwrap();
    let spec = KernelSpec::gaussian(sigma).unwrap();
    let k = kernel_block(&spec, x, x, d).unwrap();
    (spec, k)
}

fn problem(kind: LossKind, n: usize, d: usize, seed: u64) -> Dataset {
    if kind.is_classification() {
        synth_make(SynthKind::TwoGaussians { separation: 2.0 }, n, d, seed).unwrap()
    } else {
        synth_make(SynthKind::Sinusoid { noise: 0.2 }, n, d, seed).unwrap()
    }
}

fn exact_trainer<'a>(
    rows: &'a DenseRows<'a, f64>,
    ds: &Dataset,
    kind: LossKind,
    lambda: f64,
    spec: KernelSpec,
    block: usize,
) -> Trainer<'a, f64> {
    let cfg = SolverConfig { block_size: block, ..Default::default() };
    Trainer::new(rows, &ds.labels, kind, lambda, FeatureBackend::Exact(spec), cfg).unwrap()
}

fn krr_closed_form() -> Outcome {
    let ds = synth_make(SynthKind::Sinusoid { noise: 0.1 }, 200, 5, 11).unwrap();
    let x = ds.features.to_dense();
    let (spec, k) = gaussian_kernel(&x, 5);
    let mut m = DMatrix::from_row_slice(200, 200, &k);
    for i in 0..200 {
        m[(i, i)] += 1.0;
    }
    let want = m.lu().solve(&DVector::from_column_slice(&ds.labels)).unwrap();
    let want = want.as_slice();
    let t = Instant::now();
    let rows = DenseRows::new(&x, 5).unwrap();
    let mut tr = exact_trainer(&rows, &ds, LossKind::Square, 1.0, spec, 200);
    let mut err = f64::INFINITY;
    let mut used = 0;
    for it in 1..=KRR_MAX_ITERS {
        tr.step().map_err(|e| e.to_string())?;
        let diff: Vec<f64> = tr.state().alpha.iter().zip(want).map(|(a, b)| a - b).collect();
        err = norm(&diff) / norm(want);
        used = it;
        if err <= KRR_REL_TOL {
            break;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let msg = format!("relative error {err:.2e} after {used} iterations (tol {KRR_REL_TOL:e}), {secs:.2} s");
    if err <= KRR_REL_TOL && secs < KRR_SECONDS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn strong_duality() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for kind in all_losses() {
        let ds = problem(kind, 300, 5, 21);
        let x = ds.features.to_dense();
        let (spec, k) = gaussian_kernel(&x, 5);
        let rows = DenseRows::new(&x, 5).unwrap();
        let t = Instant::now();
        let mut tr = exact_trainer(&rows, &ds, kind, 1.0, spec, 64);
        let mut rel = f64::INFINITY;
        let mut used = 0;
        for it in 1..=GAP_MAX_ITERS {
            tr.step().map_err(|e| e.to_string())?;
            if it % 10 == 0 || it == GAP_MAX_ITERS {
                let a = &tr.state().alpha;
                let p = primal(kind, &k, &ds.labels, 1.0, a);
                rel = gap(kind, &k, &ds.labels, 1.0, a) / (1.0 + p.abs());
                used = it;
                if rel <= GAP_REL_TOL {
                    break;
                }
            }
        }
        let secs = t.elapsed().as_secs_f64();
        ok &= rel <= GAP_REL_TOL && secs < GAP_SECONDS;
        notes.push(format!("{} {rel:.1e}@{used}", kind.name()));
    }
    let msg = format!("relative gap (tol {GAP_REL_TOL:e}): {}", notes.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for kind in all_losses() {
        let n = 24;
        let ds = problem(kind, n, 2, 31);
        let x = ds.features.to_dense();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let k = kernel_block(&spec, &x, &x, 2).unwrap();
        let lambda = 0.5;
        let rows = DenseRows::new(&x, 2).unwrap();
        let mut tr = exact_trainer(&rows, &ds, kind, lambda, spec, 7);
        let mut g = f64::INFINITY;
        for it in 1..=50_000 {
            tr.step().map_err(|e| e.to_string())?;
            if it % 20 == 0 {
                g = gap(kind, &k, &ds.labels, lambda, &tr.state().alpha);
                if g < 1e-3 * ORACLE_GAP {
                    break;
                }
            }
        }
        let reference = proximal_gradient_oracle(kind, &k, &ds.labels, lambda, 200_000);
        let diff = max_abs_diff(&tr.state().alpha, &reference);
        ok &= g < ORACLE_GAP && diff <= ORACLE_ALPHA_TOL;
        notes.push(format!("{} {diff:.1e}", kind.name()));
    }
    let msg = format!("max |alpha - oracle| (tol {ORACLE_ALPHA_TOL:e}): {}", notes.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn monotone_descent() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    for kind in all_losses() {
        let ds = problem(kind, 200, 4, 41);
        let x = ds.features.to_dense();
        let (spec, k) = gaussian_kernel(&x, 4);
        let rows = DenseRows::new(&x, 4).unwrap();
        let mut tr = exact_trainer(&rows, &ds, kind, 0.5, spec, 32);
        let mut prev = dual_min(kind, &k, &ds.labels, 0.5, &tr.state().alpha);
        for _ in 0..DESCENT_ITERS {
            tr.step().map_err(|e| e.to_string())?;
            let j = dual_min(kind, &k, &ds.labels, 0.5, &tr.state().alpha);
            worst = worst.max((j - prev) / (1.0 + prev.abs()));
            prev = j;
        }
    }
    let msg = format!(
        "largest relative increase {worst:.2e} over {DESCENT_ITERS} iterations x 8 losses (tol {DESCENT_SLACK:e})"
    );
    if worst <= DESCENT_SLACK {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn conjugate_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst_fy: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    let mut violations = 0;
    for kind in all_losses() {
        for _ in 0..CONJ_PAIRS {
            let y = random_label(kind, &mut rng);
            let v = interior_point(kind, y, 1e-3, 3.0, &mut rng);
            let c = conj(kind, y, v);
            let u = rng.random_range(-6.0..6.0);
            if primal_loss(kind, y, u) + c < u * v - 1e-12 * (1.0 + (u * v).abs()) {
                violations += 1;
            }
            worst_fy = worst_fy.max((conjugate_by_search(kind, y, v, 40.0) - c).abs());
            if (v - conjugate_domain_lower(kind, y)).abs() < 0.05
                || (conjugate_domain_upper(kind, y) - v).abs() < 0.05
                || conjugate_kinks(kind).iter().any(|k| (v - k).abs() < 0.05)
            {
                continue;
            }
            let h = 1e-5 * (1.0 + v.abs());
            let d = conjugate_eval(kind, y, v).unwrap();
            let grad = |t: f64| conjugate_eval(kind, y, t).unwrap().grad;
            let fd_g = (conj(kind, y, v + h) - conj(kind, y, v - h)) / (2.0 * h);
            let fd_h = (grad(v + h) - grad(v - h)) / (2.0 * h);
            worst_fd = worst_fd
                .max((d.grad - fd_g).abs() / d.grad.abs().max(1.0))
                .max((d.hess - fd_h).abs() / d.hess.abs().max(1.0));
        }
    }
    let msg = format!(
        "{CONJ_PAIRS} pairs x 8 losses: Fenchel-Young violations {violations}, sup error {worst_fy:.1e} (tol {FY_TOL:e}), derivative error {worst_fd:.1e} (tol {FD_REL_TOL:e})"
    );
    if violations == 0 && worst_fy <= FY_TOL && worst_fd <= FD_REL_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn conjugate_domain_lower(kind: LossKind, y: f64) -> f64 {
    dualkern::losses::conjugate_domain(kind, y).lower
}

fn conjugate_domain_upper(kind: LossKind, y: f64) -> f64 {
    dualkern::losses::conjugate_domain(kind, y).upper
}

fn tcg_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut failures = 0;
    let mut worst_newton: f64 = 0.0;
    for t in 0..TCG_INSTANCES {
        let n = rng.random_range(1..=10);
        let unconstrained = t % 4 == 0;
        let q = if unconstrained {
            random_psd(n, n, 0.5, &mut rng)
        } else {
            let rank = rng.random_range(0..=n);
            random_psd(n, rank, 0.0, &mut rng)
        };
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lower, upper, delta): (Vec<f64>, Vec<f64>, f64) = if unconstrained {
            (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n], 1e6)
        } else {
            let lo = alpha.iter().map(|a| if rng.random::<f64>() < 0.2 { f64::NEG_INFINITY } else { a - rng.random_range(0.0..1.0) }).collect();
            let hi = alpha.iter().map(|a| if rng.random::<f64>() < 0.2 { f64::INFINITY } else { a + rng.random_range(0.0..1.0) }).collect();
            (lo, hi, 10f64.powf(rng.random_range(-3.0..1.5)))
        };
        let max_iter = if unconstrained { 50 } else { 10 };
        let s = tcg_steihaug(&q, &g, &alpha, &upper, &lower, delta, 1e-28, max_iter).map_err(|e| e.to_string())?;
        let inside = (0..n).all(|i| alpha[i] + s[i] >= lower[i] && alpha[i] + s[i] <= upper[i]);
        if norm(&s) > delta * (1.0 + TCG_SLACK) || !inside || quad_model(&q, &g, &s) > TCG_SLACK {
            failures += 1;
        }
        if unconstrained {
            let qm = DMatrix::from_row_slice(n, n, &q);
            let newton = qm.lu().solve(&-DVector::from_column_slice(&g)).unwrap();
            let diff: Vec<f64> = s.iter().zip(newton.iter()).map(|(a, b)| a - b).collect();
            worst_newton = worst_newton.max(norm(&diff) / norm(newton.as_slice()).max(1.0));
        }
    }
    let msg = format!(
        "{TCG_INSTANCES} instances: {failures} contract failures, Newton step error {worst_newton:.1e} (tol {NEWTON_TOL:e})"
    );
    if failures == 0 && worst_newton <= NEWTON_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rff_fidelity() -> Outcome {
    let (n, d) = (500, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let x: Vec<f64> = (0..n * d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let pairs: Vec<(usize, usize)> = (0..RFF_PAIRS)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            (i, j)
        })
        .collect();
    let rows = DenseRows::new(&x, d).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for family in [KernelFamily::Gaussian, KernelFamily::Laplacian] {
        let sigma = median_heuristic(&rows, MEDIAN_SUBSAMPLE, 0, family).unwrap();
        let spec = KernelSpec::new(family, sigma).unwrap();
        let exact: Vec<f64> = pairs.iter().map(|&(i, j)| spec.eval_rows(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d])).collect();
        let mut errs = Vec::new();
        for m in [256, 1024, 4096] {
            let mut total = 0.0;
            for seed in 0..RFF_SEEDS {
                let map = rff_sample::<f64>(&spec, m, d, seed).unwrap();
                let z = map.map(&x).unwrap();
                let mut e: Vec<f64> = pairs
                    .iter()
                    .zip(&exact)
                    .map(|(&(i, j), kv)| {
                        let dotp: f64 = z[i * m..(i + 1) * m].iter().zip(&z[j * m..(j + 1) * m]).map(|(a, b)| a * b).sum();
                        (dotp - kv).abs()
                    })
                    .collect();
                e.sort_by(f64::total_cmp);
                total += 0.5 * (e[RFF_PAIRS / 2 - 1] + e[RFF_PAIRS / 2]);
            }
            errs.push(total / RFF_SEEDS as f64);
        }
        ok &= errs[0] > errs[1] && errs[1] > errs[2] && errs[2] <= errs[0] / 2.0;
        notes.push(format!("{family} {:.4}/{:.4}/{:.4}", errs[0], errs[1], errs[2]));
    }
    let msg = format!("median error at M=256/1024/4096: {}", notes.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn weight_consistency() -> Outcome {
    let ds = synth_make(SynthKind::Sinusoid { noise: 0.1 }, 1000, 5, 81).unwrap();
    let x64 = ds.features.to_dense();
    let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
    let rows32 = DenseRows::new(&x32, 5).unwrap();
    let spec = KernelSpec::gaussian(1.5).unwrap();
    let map = rff_sample::<f32>(&spec, 256, 5, 3).unwrap();
    let cfg = SolverConfig { block_size: 128, ..Default::default() };
    let mut tr = Trainer::new(&rows32, &ds.labels, LossKind::Square, 1.0, FeatureBackend::Inexact(map.clone()), cfg)
        .map_err(|e| e.to_string())?;
    tr.run(THETA_ITERS, 0, |_, _| ControlFlow::Continue(())).map_err(|e| e.to_string())?;
    let st = tr.state();
    let theta: Vec<f64> = st.theta.as_ref().unwrap().iter().map(|&v| v as f64).collect();
    let alpha: Vec<f64> = st.alpha.iter().map(|&v| v as f64).collect();
    let rows64 = DenseRows::new(&x64, 5).unwrap();
    let fresh = weight_vector(&map.cast::<f64>(), &rows64, &alpha).unwrap();
    let diff: Vec<f64> = theta.iter().zip(&fresh).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / (1.0 + norm(&theta));
    let msg = format!("after {THETA_ITERS} single-precision iterations drift {rel:.2e} (tol {THETA_TOL:e})");
    if rel <= THETA_TOL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn learning_sanity() -> Outcome {
    let train = synth_make(SynthKind::TwoGaussians { separation: 6.0 }, 10_000, 10, 91).unwrap();
    let test = synth_make(SynthKind::TwoGaussians { separation: 6.0 }, 2000, 10, 92).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for loss in [LossKind::HingeL1, LossKind::Logistic] {
        let cfg = TrainConfig {
            loss,
            lambda: 1.0,
            mode: Mode::Inexact,
            rff_dim: 2048,
            iterations: SANITY_MAX_ITERS,
            log_every: 5,
            primal_eval: PrimalEval::Off,
            ..Default::default()
        };
        let t = Instant::now();
        let mut stopped_at = SANITY_MAX_ITERS;
        let model = train_model(&cfg, &train, Some(&test), &mut |row| {
            if row.val_metric.is_some_and(|a| a >= SANITY_ACCURACY) {
                stopped_at = row.iteration;
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        let acc = accuracy(&model.predict_label(&test.features).map_err(|e| e.to_string())?, &test.labels)
            .map_err(|e| e.to_string())?;
        ok &= acc >= SANITY_ACCURACY && secs < SANITY_SECONDS;
        notes.push(format!("{} accuracy {acc:.4} at iteration {stopped_at} in {secs:.1} s", loss.name()));
    }
    let msg = format!("{} (target {SANITY_ACCURACY})", notes.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cli_train(dir: &Path, tag: &str, mode: &str, data: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let model = dir.join(format!("{tag}.dkm"));
    let log = dir.join(format!("{tag}.csv"));
    let out = Command::new(env!("CARGO_BIN_EXE_dualkern"))
        .args(["--threads", "1", "train", "--loss", "logistic", "--mode", mode, "--rff-dim", "256"])
        .args(["--iters", "200", "--block-size", "64", "--log-every", "20", "--valid-fraction", "0.2", "--no-wall-clock"])
        .arg("--train")
        .arg(data)
        .arg("-o")
        .arg(&model)
        .arg("--log")
        .arg(&log)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok((std::fs::read(&model).map_err(|e| e.to_string())?, std::fs::read(&log).map_err(|e| e.to_string())?))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("train.svm");
    write_libsvm(&data, &synth_make(SynthKind::TwoGaussians { separation: 2.0 }, 600, 4, 101).unwrap())
        .map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for mode in ["exact", "inexact"] {
        let a = cli_train(dir.path(), &format!("{mode}-a"), mode, &data)?;
        let b = cli_train(dir.path(), &format!("{mode}-b"), mode, &data)?;
        let same = a == b;
        ok &= same;
        notes.push(format!("{mode} model {} bytes, log {} bytes, identical {same}", a.0.len(), a.1.len()));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn klr_safety() -> Outcome {
    let ds = synth_make(SynthKind::TwoGaussians { separation: 2.0 }, 500, 4, 111).unwrap();
    let x32: Vec<f32> = ds.features.to_dense().iter().map(|&v| v as f32).collect();
    let rows = DenseRows::new(&x32, 4).unwrap();
    let spec = KernelSpec::gaussian(2.0).unwrap();
    let mut notes = Vec::new();
    for lambda in [2f64.powi(-7), 2f64.powi(7)] {
        for exact in [true, false] {
            let backend = if exact {
                FeatureBackend::Exact(spec)
            } else {
                FeatureBackend::Inexact(rff_sample::<f32>(&spec, 512, 4, 5).unwrap())
            };
            let cfg = SolverConfig { block_size: 128, ..Default::default() };
            let mut tr = Trainer::new(&rows, &ds.labels, LossKind::Logistic, lambda, backend, cfg).map_err(|e| e.to_string())?;
            tr.set_primal_eval(PrimalEval::Full);
            let mut bad = None;
            tr.run(300, 10, |p, t| {
                let st = t.state();
                let finite = p.dual_objective.is_finite()
                    && p.primal_objective.is_some_and(f64::is_finite)
                    && st.alpha.iter().all(|v| v.is_finite())
                    && st.theta.as_ref().is_none_or(|th| th.iter().all(|v| v.is_finite()));
                if !finite {
                    bad = Some(p.iteration);
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            })
            .map_err(|e| format!("lambda {lambda}: {e}"))?;
            if let Some(it) = bad {
                return Err(format!("non-finite value at lambda {lambda}, iteration {it}"));
            }
            let obj = tr.objectives().map_err(|e| e.to_string())?;
            notes.push(format!(
                "lambda {lambda} {}: dual {:.4e} gap {:.2e}",
                if exact { "exact" } else { "inexact" },
                obj.dual(),
                obj.gap().unwrap_or(f64::NAN)
            ));
        }
    }
    let cfg = TrainConfig {
        loss: LossKind::Logistic,
        lambda: 2f64.powi(7),
        precision: Precision::Single,
        mode: Mode::Inexact,
        rff_dim: 256,
        iterations: 100,
        ..Default::default()
    };
    let model = train_model(&cfg, &ds, None, &mut |_| ControlFlow::Continue(())).map_err(|e| e.to_string())?;
    let raw = model.predict_raw(&ds.features).map_err(|e| e.to_string())?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err("non-finite prediction".into());
    }
    Ok(format!("all finite; {}", notes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("kernel ridge closed form", krr_closed_form),
        ("strong duality, all losses", strong_duality),
        ("agreement with a proximal-gradient oracle", oracle_equivalence),
        ("monotone dual descent", monotone_descent),
        ("conjugate correctness", conjugate_correctness),
        ("truncated CG contract", tcg_contract),
        ("random feature fidelity", rff_fidelity),
        ("weight vector consistency", weight_consistency),
        ("learning sanity at n = 10^4", learning_sanity),
        ("determinism", determinism),
        ("logistic numerical safety", klr_safety),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.1} s]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.1} s]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
