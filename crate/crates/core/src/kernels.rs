//! Exact shift-invariant kernels and their random Fourier feature surrogate.
//!
//! Sample matrices are row-major `rows x dim` slices. Anything that can hand
//! out densified rows on demand implements [`RowSource`], so sparse inputs are
//! only expanded one block at a time.

use std::f64::consts::PI;
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Features, ZScore};
use crate::error::{Error, Result};
use crate::real::{gemm_nt, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-|x - x'|_2^2 / (2 sigma^2))`
    Gaussian,
    /// `exp(-|x - x'|_1 / sigma)`
    Laplacian,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "laplacian" | "laplace" => Ok(KernelFamily::Laplacian),
            other => Err(format!("unknown kernel `{other}` (expected gaussian or laplacian)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("kernel bandwidth must be > 0, got {sigma}")));
        }
        Ok(KernelSpec { family, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma)
    }

    pub fn laplacian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, sigma)
    }

    /// Kernel value for two rows of equal length (unchecked).
    #[inline]
    pub fn eval_rows<T: Real>(&self, x: &[T], z: &[T]) -> T {
        match self.family {
            KernelFamily::Gaussian => {
                let mut s = T::zero();
                for (&a, &b) in x.iter().zip(z) {
                    let t = a - b;
                    s += t * t;
                }
                let two_s2 = T::lit(2.0 * self.sigma * self.sigma);
                (-s / two_s2).exp()
            }
            KernelFamily::Laplacian => {
                let mut s = T::zero();
                for (&a, &b) in x.iter().zip(z) {
                    s += (a - b).abs();
                }
                (-s / T::lit(self.sigma)).exp()
            }
        }
    }
}

pub fn kernel_eval<T: Real>(spec: &KernelSpec, x: &[T], z: &[T]) -> Result<T> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    Ok(spec.eval_rows(x, z))
}

fn check_rows<T>(data: &[T], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::param("sample dimension must be >= 1"));
    }
    if data.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: data.len() % dim,
        });
    }
    Ok(data.len() / dim)
}

/// Gram block `K[a, b]`, row-major `|A| x |B|`.
pub fn kernel_block<T: Real>(spec: &KernelSpec, xa: &[T], xb: &[T], dim: usize) -> Result<Vec<T>> {
    let na = check_rows(xa, dim)?;
    let nb = check_rows(xb, dim)?;
    let mut out = vec![T::zero(); na * nb];
    if nb == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(nb).enumerate().for_each(|(i, row)| {
        let xi = &xa[i * dim..(i + 1) * dim];
        for (j, o) in row.iter_mut().enumerate() {
            *o = spec.eval_rows(xi, &xb[j * dim..(j + 1) * dim]);
        }
    });
    Ok(out)
}

/// Source of densified sample rows.
pub trait RowSource<T: Real>: Sync {
    fn n_rows(&self) -> usize;
    fn dim(&self) -> usize;
    /// Writes rows `idx` into `out` (row-major, `idx.len() x dim`).
    fn gather(&self, idx: &[usize], out: &mut [T]);

    fn gather_vec(&self, idx: &[usize]) -> Vec<T> {
        let mut out = vec![T::zero(); idx.len() * self.dim()];
        self.gather(idx, &mut out);
        out
    }
}

/// Borrowed dense row-major matrix.
#[derive(Debug, Clone, Copy)]
pub struct DenseRows<'a, T> {
    pub data: &'a [T],
    pub dim: usize,
}

impl<'a, T: Real> DenseRows<'a, T> {
    pub fn new(data: &'a [T], dim: usize) -> Result<Self> {
        check_rows(data, dim)?;
        Ok(DenseRows { data, dim })
    }
}

impl<T: Real> RowSource<T> for DenseRows<'_, T> {
    fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn gather(&self, idx: &[usize], out: &mut [T]) {
        let d = self.dim;
        for (k, &i) in idx.iter().enumerate() {
            out[k * d..(k + 1) * d].copy_from_slice(&self.data[i * d..(i + 1) * d]);
        }
    }
}

/// Dataset features with optional z-score normalization applied on gather.
#[derive(Debug, Clone, Copy)]
pub struct NormalizedRows<'a> {
    pub features: &'a Features,
    pub zscore: Option<&'a ZScore>,
}

impl<T: Real> RowSource<T> for NormalizedRows<'_> {
    fn n_rows(&self) -> usize {
        self.features.rows()
    }

    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn gather(&self, idx: &[usize], out: &mut [T]) {
        let d = self.features.dim();
        let mut row = vec![0.0f64; d];
        for (k, &i) in idx.iter().enumerate() {
            self.features.row_into(i, &mut row);
            if let Some(z) = self.zscore {
                z.apply_row(&mut row);
            }
            for (o, &v) in out[k * d..(k + 1) * d].iter_mut().zip(&row) {
                *o = T::lit(v);
            }
        }
    }
}

/// `K[B, :] alpha`, streaming over the columns in chunks of at most `chunk`
/// samples so only `|B| x chunk` kernel values exist at a time. Summation
/// order is the column order regardless of `chunk`.
pub fn exact_kernel_grad<T: Real, S: RowSource<T> + ?Sized>(
    spec: &KernelSpec,
    x: &S,
    alpha: &[T],
    block: &[usize],
    chunk: usize,
) -> Result<Vec<T>> {
    let n = x.n_rows();
    if alpha.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: alpha.len(),
        });
    }
    let d = x.dim();
    let chunk = chunk.max(1);
    let xb = x.gather_vec(block);
    let mut acc = vec![T::zero(); block.len()];
    let mut cols: Vec<usize> = Vec::with_capacity(chunk);
    let mut xc = vec![T::zero(); chunk * d];
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        cols.clear();
        cols.extend((start..end).filter(|&j| alpha[j] != T::zero()));
        if !cols.is_empty() {
            let xc = &mut xc[..cols.len() * d];
            x.gather(&cols, xc);
            let xc = &*xc;
            let cols = &cols;
            acc.par_iter_mut().enumerate().for_each(|(r, a)| {
                let xr = &xb[r * d..(r + 1) * d];
                for (k, &j) in cols.iter().enumerate() {
                    *a += spec.eval_rows(xr, &xc[k * d..(k + 1) * d]) * alpha[j];
                }
            });
        }
        start = end;
    }
    Ok(acc)
}

/// Sampled random Fourier feature map `psi(x) = sqrt(2/M) cos(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap<T> {
    pub spec: KernelSpec,
    pub n_features: usize,
    pub dim: usize,
    pub seed: u64,
    /// `M x d`, row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub scale: T,
}

/// Draws `W` from the kernel's spectral density and `b ~ U[0, 2 pi)`.
///
/// The generator is ChaCha8 seeded with `seed`; `W` is drawn first in row-major
/// order, then `b`. Gaussian rows use `N(0, sigma^-2)`; Laplacian rows use a
/// Cauchy law with scale `1/sigma` via the inverse CDF `tan(pi (u - 1/2))`.
pub fn rff_sample<T: Real>(spec: &KernelSpec, m: usize, d: usize, seed: u64) -> Result<RffMap<T>> {
    if m == 0 || d == 0 {
        return Err(Error::param("random feature map needs M >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_sigma = 1.0 / spec.sigma;
    let w: Vec<T> = (0..m * d)
        .map(|_| {
            let v = match spec.family {
                KernelFamily::Gaussian => inv_sigma * rng.sample::<f64, _>(StandardNormal),
                KernelFamily::Laplacian => {
                    let u: f64 = rng.random();
                    inv_sigma * (PI * (u - 0.5)).tan()
                }
            };
            T::lit(v)
        })
        .collect();
    let two_pi = T::lit(2.0 * PI);
    let b: Vec<T> = (0..m)
        .map(|_| {
            let v = T::lit(rng.random::<f64>() * 2.0 * PI);
            if v >= two_pi {
                two_pi.next_below()
            } else {
                v
            }
        })
        .collect();
    Ok(RffMap {
        spec: *spec,
        n_features: m,
        dim: d,
        seed,
        w,
        b,
        scale: T::lit((2.0 / m as f64).sqrt()),
    })
}

impl<T: Real> RffMap<T> {
    /// Rebuilds a map from stored parameters.
    pub fn from_parts(spec: KernelSpec, dim: usize, seed: u64, w: Vec<T>, b: Vec<T>) -> Result<Self> {
        let m = b.len();
        if m == 0 || dim == 0 {
            return Err(Error::param("random feature map needs M >= 1 and d >= 1"));
        }
        if w.len() != m * dim {
            return Err(Error::DimensionMismatch {
                expected: m * dim,
                actual: w.len(),
            });
        }
        Ok(RffMap {
            spec,
            n_features: m,
            dim,
            seed,
            w,
            b,
            scale: T::lit((2.0 / m as f64).sqrt()),
        })
    }

    /// Features of row-major samples. Row `i` of the result is `psi(x_i)`
    /// (equivalently, an `M x |X|` column-major matrix).
    pub fn map(&self, x: &[T]) -> Result<Vec<T>> {
        let n = check_rows(x, self.dim)?;
        let m = self.n_features;
        let mut z = vec![T::zero(); n * m];
        gemm_nt(n, self.dim, m, x, &self.w, &mut z);
        z.par_chunks_mut(m).for_each(|row| {
            for (v, &bj) in row.iter_mut().zip(&self.b) {
                *v = self.scale * (*v + bj).cos();
            }
        });
        Ok(z)
    }

    /// Features of a single row.
    pub fn map_one(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.dim);
        for (j, o) in out.iter_mut().enumerate() {
            let w = &self.w[j * self.dim..(j + 1) * self.dim];
            let mut s = self.b[j];
            for (&a, &c) in w.iter().zip(x) {
                s += a * c;
            }
            *o = self.scale * s.cos();
        }
    }

    /// Casts the stored parameters to another precision.
    pub fn cast<U: Real>(&self) -> RffMap<U> {
        RffMap {
            spec: self.spec,
            n_features: self.n_features,
            dim: self.dim,
            seed: self.seed,
            w: self.w.iter().map(|v| U::lit(v.f64())).collect(),
            b: self.b.iter().map(|v| U::lit(v.f64())).collect(),
            scale: U::lit(self.scale.f64()),
        }
    }
}

pub fn rff_map<T: Real>(map: &RffMap<T>, x: &[T]) -> Result<Vec<T>> {
    map.map(x)
}

/// Default number of points the median heuristic looks at.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

/// Median pairwise distance (Euclidean for Gaussian, L1 for Laplacian) over a
/// seeded uniform subsample of `min(subsample, n)` rows.
///
/// If more than half of the pairs coincide the median is taken over the
/// non-zero distances instead; all-identical data is an error.
pub fn median_heuristic<S: RowSource<f64> + ?Sized>(
    x: &S,
    subsample: usize,
    seed: u64,
    family: KernelFamily,
) -> Result<f64> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::DegenerateData(
            "median heuristic needs at least two samples".into(),
        ));
    }
    let k = subsample.max(2).min(n);
    let idx: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        let mut v = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec();
        v.sort_unstable();
        v
    };
    let d = x.dim();
    let rows = x.gather_vec(&idx);
    let mut dists: Vec<f64> = (0..k)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = &rows[i * d..(i + 1) * d];
            let rows = &rows;
            (i + 1..k).map(move |j| {
                let xj = &rows[j * d..(j + 1) * d];
                match family {
                    KernelFamily::Gaussian => xi
                        .iter()
                        .zip(xj)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    KernelFamily::Laplacian => xi.iter().zip(xj).map(|(a, b)| (a - b).abs()).sum(),
                }
            })
        })
        .collect();
    let med = median(&mut dists);
    if med > 0.0 {
        return Ok(med);
    }
    let mut pos: Vec<f64> = dists.into_iter().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::DegenerateData(
            "all sampled points are identical; bandwidth would be zero".into(),
        ));
    }
    Ok(median(&mut pos))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
