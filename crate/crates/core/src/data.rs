//! Datasets, file loaders, normalization and synthetic fixtures.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Feature storage. Sparse rows stay sparse until a block gathers them.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense {
        data: Vec<f64>,
        dim: usize,
    },
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
        dim: usize,
    },
}

impl Features {
    pub fn dense(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::Data("zero feature dimension".into()));
        }
        if dim > 0 && data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        Ok(Features::Dense { data, dim })
    }

    pub fn rows(&self) -> usize {
        match self {
            Features::Dense { data, dim } => {
                if *dim == 0 {
                    0
                } else {
                    data.len() / dim
                }
            }
            Features::Sparse { indptr, .. } => indptr.len() - 1,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Dense { dim, .. } | Features::Sparse { dim, .. } => *dim,
        }
    }

    /// Writes row `i` densely into `out` (length `dim`).
    pub fn row_into<T: Real>(&self, i: usize, out: &mut [T]) {
        match self {
            Features::Dense { data, dim } => {
                for (o, &v) in out.iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                    *o = T::lit(v);
                }
            }
            Features::Sparse {
                indptr,
                indices,
                values,
                ..
            } => {
                out.iter_mut().for_each(|o| *o = T::zero());
                for k in indptr[i]..indptr[i + 1] {
                    out[indices[k]] = T::lit(values[k]);
                }
            }
        }
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.row_into(i, &mut out);
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Features::Dense { data, .. } => data.clone(),
            Features::Sparse { .. } => {
                let d = self.dim();
                let mut out = vec![0.0; self.rows() * d];
                for i in 0..self.rows() {
                    self.row_into(i, &mut out[i * d..(i + 1) * d]);
                }
                out
            }
        }
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Features {
        match self {
            Features::Dense { data, dim } => {
                let mut out = Vec::with_capacity(idx.len() * dim);
                for &i in idx {
                    out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                }
                Features::Dense {
                    data: out,
                    dim: *dim,
                }
            }
            Features::Sparse {
                indptr,
                indices,
                values,
                dim,
            } => {
                let mut p = vec![0];
                let mut ix = Vec::new();
                let mut vs = Vec::new();
                for &i in idx {
                    ix.extend_from_slice(&indices[indptr[i]..indptr[i + 1]]);
                    vs.extend_from_slice(&values[indptr[i]..indptr[i + 1]]);
                    p.push(ix.len());
                }
                Features::Sparse {
                    indptr: p,
                    indices: ix,
                    values: vs,
                    dim: *dim,
                }
            }
        }
    }

    /// Pads (or checks) the feature dimension, e.g. to align a test file with
    /// a model trained on more columns.
    pub fn with_dim(self, dim: usize) -> Result<Features> {
        match self {
            Features::Sparse {
                indptr,
                indices,
                values,
                dim: d,
            } if d <= dim => Ok(Features::Sparse {
                indptr,
                indices,
                values,
                dim,
            }),
            f if f.dim() == dim => Ok(f),
            f => Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.dim(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Features,
    pub labels: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Features, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        Ok(Dataset {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Distinct label values in ascending order.
    pub fn classes(&self) -> Vec<f64> {
        let set: BTreeSet<u64> = self.labels.iter().map(|y| order_key(*y)).collect();
        set.into_iter().map(from_order_key).collect()
    }

    /// Maps binary `{0, 1}` labels onto `{-1, +1}`. Returns whether a remap happened.
    pub fn remap_binary_labels(&mut self) -> bool {
        let classes = self.classes();
        if classes == [0.0, 1.0] {
            warn!("labels {{0, 1}} remapped to {{-1, +1}}");
            for y in &mut self.labels {
                *y = if *y > 0.5 { 1.0 } else { -1.0 };
            }
            true
        } else {
            false
        }
    }
}

// total order on finite floats for set membership
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_order_key(k: u64) -> f64 {
    if k >> 63 == 1 {
        f64::from_bits(k & !(1 << 63))
    } else {
        f64::from_bits(!k)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a libsvm/svmlight text file: `label idx:value idx:value ...` with
/// 1-based, strictly increasing indices. Blank lines and `#` comments are skipped.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => &line[..],
        };
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let y: f64 = label
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad label `{label}`")))?;
        labels.push(y);
        let mut prev = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(path, lineno, format!("expected index:value, got `{tok}`")))?;
            let i: usize = i
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad index `{i}`")))?;
            if i == 0 {
                return Err(parse_err(path, lineno, "indices are 1-based"));
            }
            if i <= prev {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("index {i} does not increase (previous {prev})"),
                ));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad value `{v}`")))?;
            prev = i;
            indices.push(i - 1);
            values.push(v);
            dim = dim.max(i);
        }
        indptr.push(indices.len());
    }
    Dataset::new(
        Features::Sparse {
            indptr,
            indices,
            values,
            dim,
        },
        labels,
    )
}

/// Writes libsvm text; zeros are omitted. Values use the shortest
/// representation that parses back to the same bits.
pub fn write_libsvm(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = data.dim();
    let mut row = vec![0.0f64; d];
    for i in 0..data.len() {
        data.features.row_into(i, &mut row);
        write!(w, "{}", data.labels[i])?;
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                write!(w, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    First,
    Last,
    Index(usize),
}

/// Reads a dense numeric CSV. A first row containing any non-numeric cell is
/// treated as a header.
pub fn load_csv(path: impl AsRef<Path>, label_column: LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut names = None;
    for (lineno, rec) in rdr.records().enumerate() {
        let lineno = lineno + 1;
        let rec = rec.map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(|c| c.parse::<f64>().ok()).collect();
        if width.is_none() && names.is_none() && parsed.iter().any(Option::is_none) {
            names = Some(rec.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(parse_err(
                path,
                lineno,
                format!("ragged row: {} cells, expected {w}", rec.len()),
            ));
        }
        let col = match label_column {
            LabelColumn::First => 0,
            LabelColumn::Last => w - 1,
            LabelColumn::Index(c) if c < w => c,
            LabelColumn::Index(c) => {
                return Err(parse_err(path, lineno, format!("label column {c} out of range")))
            }
        };
        for (j, (cell, v)) in rec.iter().zip(&parsed).enumerate() {
            let v = v.ok_or_else(|| parse_err(path, lineno, format!("non-numeric cell `{cell}`")))?;
            if j == col {
                labels.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let dim = width.map_or(0, |w| w.saturating_sub(1));
    let mut ds = Dataset::new(Features::dense(data, dim)?, labels)?;
    if let (Some(mut n), Some(w)) = (names, width) {
        let col = match label_column {
            LabelColumn::First => 0,
            LabelColumn::Last => w - 1,
            LabelColumn::Index(c) => c,
        };
        if col < n.len() {
            n.remove(col);
        }
        ds.feature_names = Some(n);
    }
    Ok(ds)
}

/// Loads by extension: `.csv` as CSV (label in the last column), anything
/// else as libsvm.
pub fn load_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => load_csv(path, LabelColumn::Last),
        _ => load_libsvm(path),
    }
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn zscore_fit(features: &Features) -> ZScore {
    let n = features.rows();
    let d = features.dim();
    let mut mean = vec![0.0; d];
    let mut row = vec![0.0; d];
    for i in 0..n {
        features.row_into(i, &mut row);
        for (m, &v) in mean.iter_mut().zip(&row) {
            *m += v;
        }
    }
    let nf = n.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= nf);
    // second pass on centered values
    let mut var = vec![0.0; d];
    for i in 0..n {
        features.row_into(i, &mut row);
        for ((s, &v), &m) in var.iter_mut().zip(&row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / nf).sqrt()).collect();
    ZScore { mean, std }
}

impl ZScore {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
        }
    }
}

/// Normalizes every row; constant features become zero. The result is dense.
pub fn zscore_apply(stats: &ZScore, features: &Features) -> Result<Features> {
    if stats.dim() != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            actual: features.dim(),
        });
    }
    let d = features.dim();
    let mut data = features.to_dense();
    for row in data.chunks_mut(d.max(1)) {
        stats.apply_row(row);
    }
    Features::dense(data, d)
}

/// Seeded shuffle, then the first `round(fraction * n)` rows go to train.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = data.len();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Data(format!(
            "split of {n} rows at fraction {fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.select(&idx[..n_train]), data.select(&idx[n_train..])))
}

/// Generative processes for test fixtures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    /// Balanced +/-1 classes, unit-variance Gaussians whose means are
    /// `separation` apart along the first axis.
    TwoGaussians { separation: f64 },
    /// `x ~ N(0, I)`, `y = w^T x + noise * N(0, 1)` with `w ~ N(0, I / d)`.
    LinearRegression { noise: f64 },
    /// `x ~ U[-2, 2]^d`, `y = sin(2 x_1) + 0.5 cos(x_2) + noise * N(0, 1)`.
    Sinusoid { noise: f64 },
}

pub fn synth_make(kind: SynthKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::param("synthetic data needs n >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    match kind {
        SynthKind::TwoGaussians { separation } => {
            for i in 0..n {
                let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
                y[i] = label;
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    x[i * d + j] = z + if j == 0 { label * separation / 2.0 } else { 0.0 };
                }
            }
        }
        SynthKind::LinearRegression { noise } => {
            let scale = 1.0 / (d as f64).sqrt();
            let w: Vec<f64> = (0..d)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for i in 0..n {
                let row = &mut x[i * d..(i + 1) * d];
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let e: f64 = rng.sample(StandardNormal);
                y[i] = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise * e;
            }
        }
        SynthKind::Sinusoid { noise } => {
            for i in 0..n {
                let row = &mut x[i * d..(i + 1) * d];
                for v in row.iter_mut() {
                    *v = rng.random_range(-2.0..2.0);
                }
                let second = if d > 1 { row[1] } else { 0.0 };
                let e: f64 = rng.sample(StandardNormal);
                y[i] = (2.0 * row[0]).sin() + 0.5 * second.cos() + noise * e;
            }
        }
    }
    Dataset::new(Features::dense(x, d)?, y)
}
