//! Primal losses, their Fenchel conjugates and the induced dual boxes.
//!
//! For a loss `xi_y(u) = loss(y, u)` the dual problem penalizes each multiplier
//! through `(1/lambda) * xi*_y(-lambda * alpha_i)`, and the domain of the
//! conjugate becomes a box on `alpha_i`. [`DualPenalty`] is that separable term
//! as the solver sees it, including the numerical safeguards for the logistic
//! and Lp rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Loss family together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `(y - u)^2 / 2`, kernel ridge regression.
    Square,
    /// `|y - u|^p / p` with `p > 1`.
    LpReg { p: f64 },
    /// `|y - u|`.
    L1Reg,
    /// Huber loss with threshold `delta > 0`.
    Huber { delta: f64 },
    /// epsilon-insensitive loss `max(0, |y - u| - epsilon)`.
    Svr { epsilon: f64 },
    /// Hinge loss `max(0, 1 - y u)`.
    HingeL1,
    /// Squared hinge `max(0, 1 - y u)^2 / 2`.
    SquaredHingeL2,
    /// Logistic loss `log(1 + exp(-y u))`.
    Logistic,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Square => write!(f, "square"),
            LossKind::LpReg { p } => write!(f, "lp(p={p})"),
            LossKind::L1Reg => write!(f, "l1"),
            LossKind::Huber { delta } => write!(f, "huber(delta={delta})"),
            LossKind::Svr { epsilon } => write!(f, "svr(epsilon={epsilon})"),
            LossKind::HingeL1 => write!(f, "hinge"),
            LossKind::SquaredHingeL2 => write!(f, "squared_hinge"),
            LossKind::Logistic => write!(f, "logistic"),
        }
    }
}

impl LossKind {
    pub fn lp(p: f64) -> Result<Self> {
        let kind = LossKind::LpReg { p };
        kind.validate()?;
        Ok(kind)
    }

    pub fn huber(delta: f64) -> Result<Self> {
        let kind = LossKind::Huber { delta };
        kind.validate()?;
        Ok(kind)
    }

    pub fn svr(epsilon: f64) -> Result<Self> {
        let kind = LossKind::Svr { epsilon };
        kind.validate()?;
        Ok(kind)
    }

    /// All eight families with representative hyperparameters.
    pub fn catalog() -> [LossKind; 8] {
        [
            LossKind::Square,
            LossKind::LpReg { p: 3.0 },
            LossKind::L1Reg,
            LossKind::Huber { delta: 1.0 },
            LossKind::Svr { epsilon: 0.25 },
            LossKind::HingeL1,
            LossKind::SquaredHingeL2,
            LossKind::Logistic,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::LpReg { p } if !(p > 1.0 && p.is_finite()) => {
                Err(Error::param(format!("Lp loss needs p > 1, got {p}")))
            }
            LossKind::Huber { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(Error::param(format!("Huber loss needs delta > 0, got {delta}")))
            }
            LossKind::Svr { epsilon } if !(epsilon >= 0.0 && epsilon.is_finite()) => Err(
                Error::param(format!("SVR loss needs epsilon >= 0, got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(
            self,
            LossKind::HingeL1 | LossKind::SquaredHingeL2 | LossKind::Logistic
        )
    }

    /// Conjugate is affine on its domain (plus the kink of SVR at zero).
    pub fn is_piecewise_linear(&self) -> bool {
        matches!(self, LossKind::L1Reg | LossKind::Svr { .. } | LossKind::HingeL1)
    }

    /// Conjugate is `v^2/2 + v y`; the three kinds differ only in their box.
    pub fn is_quadratic(&self) -> bool {
        matches!(
            self,
            LossKind::Square | LossKind::Huber { .. } | LossKind::SquaredHingeL2
        )
    }

    /// Conjugate exponent `q` of the Lp loss.
    pub fn lp_conjugate_exponent(p: f64) -> f64 {
        p / (p - 1.0)
    }

    /// Stable short name used by the CLI and the model file.
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::LpReg { .. } => "lp",
            LossKind::L1Reg => "l1",
            LossKind::Huber { .. } => "huber",
            LossKind::Svr { .. } => "svr",
            LossKind::HingeL1 => "hinge",
            LossKind::SquaredHingeL2 => "squared_hinge",
            LossKind::Logistic => "logistic",
        }
    }
}

/// Per-sample bounds on a dual multiplier; either side may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBox<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> DualBox<T> {
    pub fn unbounded() -> Self {
        DualBox {
            lower: T::neg_infinity(),
            upper: T::infinity(),
        }
    }

    pub fn contains(&self, a: T) -> bool {
        a >= self.lower && a <= self.upper
    }

    pub fn clamp(&self, a: T) -> T {
        a.max(self.lower).min(self.upper)
    }
}

/// Value and first two derivatives of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs<T> {
    pub value: T,
    pub grad: T,
    pub hess: T,
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `x log x` with `0 log 0 = 0`.
fn xlogx<T: Real>(x: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

/// Binary entropy `x log x + (1-x) log(1-x)`; `one_minus` is passed separately
/// so callers can supply an accurately computed `1 - x`.
fn bent<T: Real>(x: T, one_minus: T) -> T {
    xlogx(x) + xlogx(one_minus)
}

fn check_label<T: Real>(kind: LossKind, y: T) -> Result<()> {
    if kind.is_classification() && y != T::one() && y != -T::one() {
        return Err(Error::param(format!(
            "{kind} expects labels in {{-1, +1}}, got {y}"
        )));
    }
    Ok(())
}

/// Primal loss `xi_y(u)`.
pub fn primal_loss<T: Real>(kind: LossKind, y: T, u: T) -> T {
    let r = (y - u).abs();
    match kind {
        LossKind::Square => r * r / T::lit(2.0),
        LossKind::LpReg { p } => {
            let p = T::lit(p);
            r.powf(p) / p
        }
        LossKind::L1Reg => r,
        LossKind::Huber { delta } => {
            let delta = T::lit(delta);
            if r <= delta {
                r * r / T::lit(2.0)
            } else {
                delta * r - delta * delta / T::lit(2.0)
            }
        }
        LossKind::Svr { epsilon } => (r - T::lit(epsilon)).max(T::zero()),
        LossKind::HingeL1 => (T::one() - y * u).max(T::zero()),
        LossKind::SquaredHingeL2 => {
            let m = (T::one() - y * u).max(T::zero());
            m * m / T::lit(2.0)
        }
        LossKind::Logistic => {
            // softplus(z) = max(z, 0) + log1p(exp(-|z|)), z = -y u
            let z = -y * u;
            z.max(T::zero()) + (-z.abs()).exp().ln_1p()
        }
    }
}

/// Domain of the conjugate `xi*_y` as an interval in `v`.
pub fn conjugate_domain<T: Real>(kind: LossKind, y: T) -> DualBox<T> {
    let one = T::one();
    match kind {
        LossKind::Square | LossKind::LpReg { .. } => DualBox::unbounded(),
        LossKind::L1Reg | LossKind::Svr { .. } => DualBox {
            lower: -one,
            upper: one,
        },
        LossKind::Huber { delta } => {
            let d = T::lit(delta);
            DualBox {
                lower: -d,
                upper: d,
            }
        }
        // -1 <= v y <= 0
        LossKind::HingeL1 | LossKind::Logistic => {
            if y > T::zero() {
                DualBox {
                    lower: -one,
                    upper: T::zero(),
                }
            } else {
                DualBox {
                    lower: T::zero(),
                    upper: one,
                }
            }
        }
        // v y <= 0
        LossKind::SquaredHingeL2 => {
            if y > T::zero() {
                DualBox {
                    lower: T::neg_infinity(),
                    upper: T::zero(),
                }
            } else {
                DualBox {
                    lower: T::zero(),
                    upper: T::infinity(),
                }
            }
        }
    }
}

/// Fenchel conjugate `xi*_y(v)` with its first and second derivatives.
///
/// Piecewise-linear conjugates report `hess = 0`; at the SVR kink the
/// gradient uses `sign(0) = 0`.
pub fn conjugate_eval<T: Real>(kind: LossKind, y: T, v: T) -> Result<Derivs<T>> {
    check_label(kind, y)?;
    let dom = conjugate_domain(kind, y);
    if !dom.contains(v) {
        return Err(Error::DomainViolation {
            kind,
            v: v.f64(),
            lower: dom.lower.f64(),
            upper: dom.upper.f64(),
        });
    }
    let half = T::lit(0.5);
    let out = match kind {
        LossKind::Square | LossKind::Huber { .. } | LossKind::SquaredHingeL2 => Derivs {
            value: half * v * v + v * y,
            grad: v + y,
            hess: T::one(),
        },
        LossKind::LpReg { p } => {
            let q = T::lit(LossKind::lp_conjugate_exponent(p));
            let a = v.abs();
            Derivs {
                value: a.powf(q) / q + v * y,
                grad: a.powf(q - T::one()) * sign(v) + y,
                hess: (q - T::one()) * a.powf(q - T::lit(2.0)),
            }
        }
        LossKind::L1Reg | LossKind::HingeL1 => Derivs {
            value: v * y,
            grad: y,
            hess: T::zero(),
        },
        LossKind::Svr { epsilon } => {
            let e = T::lit(epsilon);
            Derivs {
                value: e * v.abs() + v * y,
                grad: e * sign(v) + y,
                hess: T::zero(),
            }
        }
        LossKind::Logistic => {
            // xi*(v) = bEnt(u), u = -v y in [0, 1]
            let u = -v * y;
            let um = T::one() - u;
            Derivs {
                value: bent(u, um),
                grad: -y * (u.ln() - um.ln()),
                hess: T::one() / (u * um),
            }
        }
    };
    Ok(out)
}

/// Box on `alpha` such that `-lambda * alpha` lies in the conjugate's domain.
pub fn dual_box<T: Real>(kind: LossKind, y: T, lambda: T) -> Result<DualBox<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::param(format!("lambda must be > 0, got {lambda}")));
    }
    kind.validate()?;
    check_label(kind, y)?;
    let dom = conjugate_domain(kind, y);
    // v = -lambda * alpha  =>  alpha in [-upper/lambda, -lower/lambda]
    let lower = if dom.upper.is_infinite() {
        T::neg_infinity()
    } else {
        -dom.upper / lambda
    };
    let upper = if dom.lower.is_infinite() {
        T::infinity()
    } else {
        -dom.lower / lambda
    };
    // keep signed zeros out of the box
    Ok(DualBox {
        lower: lower + T::zero(),
        upper: upper + T::zero(),
    })
}

/// Block dual penalty `f(alpha_B) = sum_i xi*_{y_i}(-lambda alpha_i) / lambda`
/// evaluated through the chain rule on [`conjugate_eval`].
pub fn f_block<T: Real>(
    kind: LossKind,
    y: &[T],
    lambda: T,
    alpha: &[T],
) -> Result<(T, Vec<T>, Vec<T>)> {
    if y.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: alpha.len(),
        });
    }
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(y.len());
    let mut hess = Vec::with_capacity(y.len());
    for (&yi, &ai) in y.iter().zip(alpha) {
        let c = conjugate_eval(kind, yi, -lambda * ai)?;
        value += c.value / lambda;
        grad.push(-c.grad);
        hess.push(lambda * c.hess);
    }
    Ok((value, grad, hess))
}

/// `epsilon` of the logistic safeguard: the gap between `1/lambda` and the
/// next smaller representable number at the working precision.
pub fn klr_epsilon<T: Real>(lambda: T) -> T {
    let inv = T::one() / lambda;
    inv - inv.next_below()
}

/// Logistic block penalty on the shrunken box `eps <= y alpha <= 1/lambda - eps`
/// with the Hessian diagonal clamped at `eps^{-1/2}`.
pub fn klr_safeguarded_eval<T: Real>(
    y: &[T],
    lambda: T,
    alpha: &[T],
) -> Result<(T, Vec<T>, Vec<T>, Vec<DualBox<T>>)> {
    if y.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: alpha.len(),
        });
    }
    let pen = DualPenalty::new(LossKind::Logistic, lambda)?;
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(y.len());
    let mut hess = Vec::with_capacity(y.len());
    let mut boxes = Vec::with_capacity(y.len());
    for (&yi, &ai) in y.iter().zip(alpha) {
        check_label(LossKind::Logistic, yi)?;
        value += pen.value(yi, ai);
        grad.push(pen.grad(yi, ai));
        hess.push(pen.hess(yi, ai));
        boxes.push(pen.feasible_box(yi));
    }
    Ok((value, grad, hess, boxes))
}

/// Gradient of the linearized SVR block model,
/// `K_{B,:} alpha - y_B + epsilon * sign(alpha_B)` with `sign(0) = 0`.
pub fn svr_linearized_gradient<T: Real>(
    alpha: &[T],
    kernel_grad: &[T],
    y: &[T],
    epsilon: T,
) -> Vec<T> {
    alpha
        .iter()
        .zip(kernel_grad)
        .zip(y)
        .map(|((&a, &kg), &yi)| kg - yi + epsilon * sign(a))
        .collect()
}

/// The separable dual term in the form the solver consumes: value, gradient
/// and (safeguarded) Hessian per coordinate, plus the feasible box.
#[derive(Debug, Clone, Copy)]
pub struct DualPenalty<T> {
    kind: LossKind,
    lambda: T,
    inv_lambda: T,
    /// KLR box shrink; also the base of the Hessian cap.
    eps: T,
    hess_cap: T,
    param: T,
    q: T,
}

impl<T: Real> DualPenalty<T> {
    pub fn new(kind: LossKind, lambda: T) -> Result<Self> {
        kind.validate()?;
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::param(format!("lambda must be > 0, got {lambda}")));
        }
        let eps = klr_epsilon(lambda);
        let (param, q) = match kind {
            LossKind::LpReg { p } => (T::lit(p), T::lit(LossKind::lp_conjugate_exponent(p))),
            LossKind::Huber { delta } => (T::lit(delta), T::zero()),
            LossKind::Svr { epsilon } => (T::lit(epsilon), T::zero()),
            _ => (T::zero(), T::zero()),
        };
        Ok(DualPenalty {
            kind,
            lambda,
            inv_lambda: T::one() / lambda,
            eps,
            hess_cap: T::one() / eps.sqrt(),
            param,
            q,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Safeguard width for the logistic box.
    pub fn epsilon(&self) -> T {
        self.eps
    }

    pub fn hess_cap(&self) -> T {
        self.hess_cap
    }

    /// Box the solver keeps `alpha_i` in. Identical to [`dual_box`] except for
    /// the logistic loss, whose box is pulled in by `eps` on both ends.
    pub fn feasible_box(&self, y: T) -> DualBox<T> {
        match self.kind {
            LossKind::Logistic => {
                let lo = self.eps;
                let hi = self.inv_lambda - self.eps;
                if y > T::zero() {
                    DualBox {
                        lower: lo,
                        upper: hi,
                    }
                } else {
                    DualBox {
                        lower: -hi,
                        upper: -lo,
                    }
                }
            }
            kind => dual_box(kind, y, self.lambda).expect("validated at construction"),
        }
    }

    /// Feasible starting multiplier.
    pub fn initial(&self, y: T) -> T {
        match self.kind {
            LossKind::Logistic => {
                let a = (T::lit(1e-3) * self.inv_lambda).min(T::lit(0.5) * self.inv_lambda);
                self.feasible_box(y).clamp(y * a)
            }
            _ => T::zero(),
        }
    }

    pub fn value(&self, y: T, a: T) -> T {
        let lam = self.lambda;
        let half = T::lit(0.5);
        match self.kind {
            LossKind::Square | LossKind::Huber { .. } | LossKind::SquaredHingeL2 => {
                half * lam * a * a - a * y
            }
            LossKind::LpReg { .. } => {
                (lam * a.abs()).powf(self.q) / (self.q * lam) - a * y
            }
            LossKind::L1Reg | LossKind::HingeL1 => -a * y,
            LossKind::Svr { .. } => self.param * a.abs() - a * y,
            LossKind::Logistic => {
                let ah = y * a;
                let x = lam * ah;
                let xm = lam * (self.inv_lambda - ah);
                bent(x, xm) / lam
            }
        }
    }

    /// Gradient; at the SVR kink `sign(0) = 0` is used.
    pub fn grad(&self, y: T, a: T) -> T {
        let lam = self.lambda;
        match self.kind {
            LossKind::Square | LossKind::Huber { .. } | LossKind::SquaredHingeL2 => lam * a - y,
            LossKind::LpReg { .. } => {
                (lam * a.abs()).powf(self.q - T::one()) * sign(a) - y
            }
            LossKind::L1Reg | LossKind::HingeL1 => -y,
            LossKind::Svr { .. } => self.param * sign(a) - y,
            LossKind::Logistic => {
                let ah = y * a;
                y * (ah.ln() - (self.inv_lambda - ah).ln())
            }
        }
    }

    /// Hessian diagonal, clamped at `eps^{-1/2}` where it blows up.
    pub fn hess(&self, y: T, a: T) -> T {
        let lam = self.lambda;
        match self.kind {
            LossKind::Square | LossKind::Huber { .. } | LossKind::SquaredHingeL2 => lam,
            LossKind::LpReg { .. } => {
                let h = lam * (self.q - T::one()) * (lam * a.abs()).powf(self.q - T::lit(2.0));
                h.min(self.hess_cap)
            }
            LossKind::L1Reg | LossKind::HingeL1 | LossKind::Svr { .. } => T::zero(),
            LossKind::Logistic => {
                let ah = y * a;
                let h = T::one() / (ah * lam * (self.inv_lambda - ah));
                h.min(self.hess_cap)
            }
        }
    }

    /// Magnitude that the rounding error of [`delta`](Self::delta) scales with.
    pub fn delta_scale(&self, y: T, a: T, s: T) -> T {
        match self.kind {
            LossKind::LpReg { .. } | LossKind::Logistic => {
                self.value(y, a + s).abs() + self.value(y, a).abs()
            }
            _ => s.abs() * (self.lambda * (a.abs() + s.abs()) + y.abs() + self.param),
        }
    }

    /// `value(y, a + s) - value(y, a)` without cancellation where the form allows.
    pub fn delta(&self, y: T, a: T, s: T) -> T {
        let lam = self.lambda;
        let half = T::lit(0.5);
        match self.kind {
            LossKind::Square | LossKind::Huber { .. } | LossKind::SquaredHingeL2 => {
                lam * s * (a + half * s) - s * y
            }
            LossKind::L1Reg | LossKind::HingeL1 => -s * y,
            LossKind::Svr { .. } => self.param * ((a + s).abs() - a.abs()) - s * y,
            LossKind::LpReg { .. } | LossKind::Logistic => {
                self.value(y, a + s) - self.value(y, a)
            }
        }
    }
}
