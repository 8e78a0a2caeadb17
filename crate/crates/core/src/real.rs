//! Working-precision abstraction and the handful of dense kernels the solver
//! needs. Matrices are plain row-major slices; `gemm` dispatches to
//! `matrixmultiply` so products run at a reasonable speed without BLAS.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Floating-point type the solver runs in.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const PRECISION: Precision;

    /// Largest representable value strictly below `self` (for positive finite `self`).
    fn next_below(self) -> Self;

    /// Neighbouring representable values (any sign).
    fn step_down(self) -> Self;
    fn step_up(self) -> Self;

    /// `C <- alpha * A B + beta * C` with explicit row/column strides.
    ///
    /// # Safety contract
    /// Slices must be long enough for the given shapes and strides; this is
    /// checked by the safe wrappers below.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    #[default]
    Double,
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Single => "single",
            Precision::Double => "double",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" | "float32" => Ok(Precision::Single),
            "double" | "f64" | "float64" => Ok(Precision::Double),
            other => Err(format!("unknown precision `{other}` (expected single or double)")),
        }
    }
}

macro_rules! impl_real {
    ($t:ty, $prec:expr, $gemm:path) => {
        impl Real for $t {
            const PRECISION: Precision = $prec;

            #[inline]
            fn next_below(self) -> Self {
                debug_assert!(self > 0.0 && self.is_finite());
                <$t>::from_bits(self.to_bits() - 1)
            }

            #[inline]
            fn step_down(self) -> Self {
                <$t>::next_down(self)
            }

            #[inline]
            fn step_up(self) -> Self {
                <$t>::next_up(self)
            }

            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: callers go through `gemm_nn`/`gemm_nt`, which assert
                // that every slice covers its shape under the given strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_real!(f32, Precision::Single, matrixmultiply::sgemm);
impl_real!(f64, Precision::Double, matrixmultiply::dgemm);

/// `C (m x n) <- A (m x k) * B (k x n)`, all row-major.
pub fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    T::gemm_raw(
        m,
        k,
        n,
        T::one(),
        a,
        k as isize,
        1,
        b,
        n as isize,
        1,
        T::zero(),
        c,
        n as isize,
        1,
    );
}

/// `C (m x n) <- A (m x k) * B^T` where `B` is stored row-major as `n x k`.
pub fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    T::gemm_raw(
        m,
        k,
        n,
        T::one(),
        a,
        k as isize,
        1,
        b,
        1,
        k as isize,
        T::zero(),
        c,
        n as isize,
        1,
    );
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y <- y + a * x`
#[inline]
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out <- A x` for a row-major `rows x cols` matrix.
pub fn matvec<T: Real>(a: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&a[r * cols..(r + 1) * cols], x);
    }
}

/// `x^T A x` for a square row-major matrix.
pub fn quad_form<T: Real>(a: &[T], x: &[T]) -> T {
    let n = x.len();
    let mut acc = T::zero();
    for (r, &xr) in x.iter().enumerate() {
        acc += xr * dot(&a[r * n..(r + 1) * n], x);
    }
    acc
}

pub fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
