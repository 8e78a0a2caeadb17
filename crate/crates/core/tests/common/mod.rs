//! Reference computations shared by the integration tests. Everything here is
//! written from the definitions, independently of the library's solver paths.
#![allow(dead_code)]

use dualkern::losses::{conjugate_domain, conjugate_eval, primal_loss, DualPenalty};
use dualkern::LossKind;
use rand::Rng;

/// One representative of each loss family with its hyperparameter fixed.
pub fn all_losses() -> [LossKind; 8] {
    [
        LossKind::Square,
        LossKind::LpReg { p: 3.0 },
        LossKind::L1Reg,
        LossKind::Huber { delta: 0.7 },
        LossKind::Svr { epsilon: 0.3 },
        LossKind::HingeL1,
        LossKind::SquaredHingeL2,
        LossKind::Logistic,
    ]
}

pub fn conj(kind: LossKind, y: f64, v: f64) -> f64 {
    conjugate_eval(kind, y, v).unwrap().value
}

/// `sup_u v u - loss(y, u)` by a grid scan over `[y - r, y + r]` refined with
/// golden-section search around the best grid point (the objective is concave).
pub fn conjugate_by_search(kind: LossKind, y: f64, v: f64, r: f64) -> f64 {
    let h = |u: f64| v * u - primal_loss(kind, y, u);
    let n = 4000;
    let step = 2.0 * r / n as f64;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..=n {
        let val = h(y - r + k as f64 * step);
        if val > best_val {
            best_val = val;
            best = k;
        }
    }
    let mut a = y - r + (best.max(1) - 1) as f64 * step;
    let mut b = y - r + (best + 1).min(n) as f64 * step;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = h(d);
        }
        if b - a < 1e-14 * (1.0 + a.abs()) {
            break;
        }
    }
    best_val.max(fc).max(fd).max(h(0.5 * (a + b)))
}

pub fn random_label<R: Rng>(kind: LossKind, rng: &mut R) -> f64 {
    if kind.is_classification() {
        if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    } else {
        rng.random_range(-2.0..2.0)
    }
}

/// A point of the conjugate's domain at least `margin` inside it and within
/// `[-cap, cap]`.
pub fn interior_point<R: Rng>(kind: LossKind, y: f64, margin: f64, cap: f64, rng: &mut R) -> f64 {
    let dom = conjugate_domain(kind, y);
    let lo = dom.lower.max(-cap) + margin;
    let hi = dom.upper.min(cap) - margin;
    rng.random_range(lo..hi)
}

/// Points where the conjugate is not twice differentiable.
pub fn conjugate_kinks(kind: LossKind) -> Vec<f64> {
    match kind {
        LossKind::Svr { .. } | LossKind::LpReg { .. } => vec![0.0],
        _ => Vec::new(),
    }
}

pub fn dense_matvec(k: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| k[i * n + j] * x[j]).sum()).collect()
}

/// Minimization form of the dual: `alpha' K alpha / 2 + sum_i conj_i(-lambda alpha_i) / lambda`.
pub fn dual_min(kind: LossKind, k: &[f64], y: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    let ka = dense_matvec(k, alpha);
    let quad: f64 = alpha.iter().zip(&ka).map(|(a, b)| a * b).sum::<f64>() / 2.0;
    let sep: f64 = y
        .iter()
        .zip(alpha)
        .map(|(&yi, &ai)| conj(kind, yi, -lambda * ai) / lambda)
        .sum();
    quad + sep
}

/// Primal objective of the predictor `u = K alpha`, scaled to match [`dual_min`].
pub fn primal(kind: LossKind, k: &[f64], y: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    let ka = dense_matvec(k, alpha);
    let reg: f64 = alpha.iter().zip(&ka).map(|(a, b)| a * b).sum::<f64>() * lambda / 2.0;
    let loss: f64 = y.iter().zip(&ka).map(|(&yi, &ui)| primal_loss(kind, yi, ui)).sum();
    loss / lambda + reg / lambda
}

/// `primal + dual_min`, which is nonnegative and zero at the optimum.
pub fn gap(kind: LossKind, k: &[f64], y: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    primal(kind, k, y, lambda, alpha) + dual_min(kind, k, y, lambda, alpha)
}

/// Accelerated proximal gradient on the dual with backtracking and restarts.
/// The nonsmooth `epsilon |alpha|` term of the SVR penalty is handled by its
/// prox; everything else is smooth on the box.
pub fn proximal_gradient_oracle(kind: LossKind, k: &[f64], y: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
    let pen = DualPenalty::new(kind, lambda).unwrap();
    let svr_eps = match kind {
        LossKind::Svr { epsilon } => epsilon,
        _ => 0.0,
    };
    let boxes: Vec<_> = y.iter().map(|&yi| pen.feasible_box(yi)).collect();
    // smooth part: quadratic plus penalty without the |alpha| term
    let smooth = |a: &[f64]| -> f64 {
        let ka = dense_matvec(k, a);
        let q: f64 = a.iter().zip(&ka).map(|(x, z)| x * z).sum::<f64>() / 2.0;
        q + y
            .iter()
            .zip(a)
            .map(|(&yi, &ai)| pen.value(yi, ai) - svr_eps * ai.abs())
            .sum::<f64>()
    };
    let grad = |a: &[f64]| -> Vec<f64> {
        let ka = dense_matvec(k, a);
        y.iter()
            .zip(a)
            .zip(&ka)
            .map(|((&yi, &ai), &kai)| kai + pen.grad(yi, ai) - svr_eps * sign(ai))
            .collect()
    };
    let prox = |z: &[f64], t: f64| -> Vec<f64> {
        z.iter()
            .zip(&boxes)
            .map(|(&zi, bx)| {
                let s = zi.signum() * (zi.abs() - t * svr_eps).max(0.0);
                bx.clamp(s)
            })
            .collect()
    };
    let full = |a: &[f64]| smooth(a) + svr_eps * a.iter().map(|v| v.abs()).sum::<f64>();

    let mut x: Vec<f64> = y.iter().map(|&yi| pen.initial(yi)).collect();
    let mut z = x.clone();
    let mut tk: f64 = 1.0;
    let mut step = 1.0;
    let mut fx = full(&x);
    for _ in 0..iters {
        let gz = grad(&z);
        let fz = smooth(&z);
        let mut cand;
        loop {
            let trial: Vec<f64> = z.iter().zip(&gz).map(|(a, g)| a - step * g).collect();
            cand = prox(&trial, step);
            let d: Vec<f64> = cand.iter().zip(&z).map(|(a, b)| a - b).collect();
            let model = fz
                + d.iter().zip(&gz).map(|(a, b)| a * b).sum::<f64>()
                + d.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            let fc = smooth(&cand);
            if fc.is_finite() && fc <= model + 1e-15 * (1.0 + fz.abs()) {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        let fc = full(&cand);
        if fc > fx {
            // restart momentum
            z = x.clone();
            tk = 1.0;
            continue;
        }
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        z = cand
            .iter()
            .zip(&x)
            .zip(&boxes)
            .map(|((c, p), bx)| bx.clamp(c + (tk - 1.0) / tn * (c - p)))
            .collect();
        let moved = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = cand;
        fx = fc;
        tk = tn;
        step *= 1.5;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// TCG model value `g's + s'Qs/2`.
pub fn quad_model(q: &[f64], g: &[f64], s: &[f64]) -> f64 {
    let qs = dense_matvec(q, s);
    g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() + s.iter().zip(&qs).map(|(a, b)| a * b).sum::<f64>() / 2.0
}

/// Random positive semidefinite `n x n` matrix `A'A (+ shift I)` with `A` of `rank` rows.
pub fn random_psd<R: Rng>(n: usize, rank: usize, shift: f64, rng: &mut R) -> Vec<f64> {
    let a: Vec<f64> = (0..rank * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = (0..rank).map(|r| a[r * n + i] * a[r * n + j]).sum();
        }
        q[i * n + i] += shift;
    }
    q
}
