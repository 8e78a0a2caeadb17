//! Model file container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "DKMODEL\0"
//! version  u32
//! meta_len u64
//! meta     meta_len bytes of JSON (model metadata + array manifest)
//! arrays   raw little-endian floats, in manifest order
//! digest   32 bytes  SHA-256 of everything above
//! ```
//!
//! Metadata floats are written with shortest round-trip formatting, so a
//! saved and reloaded model predicts bit-identically.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ZScore;
use crate::error::{Error, Result};
use crate::kernels::RffMap;
use crate::model::{Machine, Mode, ModelMeta, Part, Predictor, TrainedModel};
use crate::real::{Precision, Real};

pub const MAGIC: &[u8; 8] = b"DKMODEL\0";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: Dtype,
    pub len: usize,
}

/// Metadata section of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub model: ModelMeta,
    pub has_zscore: bool,
    pub arrays: Vec<ArrayEntry>,
}

impl ModelHeader {
    fn payload_len(&self) -> usize {
        self.arrays.iter().map(|a| a.len * a.dtype.width()).sum()
    }
}

fn dtype_of(p: Precision) -> Dtype {
    match p {
        Precision::Single => Dtype::F32,
        Precision::Double => Dtype::F64,
    }
}

fn part_name(ovr: bool, c: usize, name: &str) -> String {
    if ovr {
        format!("m{c}.{name}")
    } else {
        name.to_string()
    }
}

trait LeBytes: Sized {
    fn put(v: &[Self], out: &mut Vec<u8>);
    fn take(b: &[u8]) -> Vec<Self>;
}

impl LeBytes for f32 {
    fn put(v: &[Self], out: &mut Vec<u8>) {
        v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    }
    fn take(b: &[u8]) -> Vec<Self> {
        b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect()
    }
}

impl LeBytes for f64 {
    fn put(v: &[Self], out: &mut Vec<u8>) {
        v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    }
    fn take(b: &[u8]) -> Vec<Self> {
        b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect()
    }
}

struct Writer {
    entries: Vec<ArrayEntry>,
    body: Vec<u8>,
}

impl Writer {
    fn push<T: LeBytes>(&mut self, name: String, dtype: Dtype, v: &[T]) {
        self.entries.push(ArrayEntry {
            name,
            dtype,
            len: v.len(),
        });
        T::put(v, &mut self.body);
    }
}

fn write_machine<T: Real + LeBytes>(w: &mut Writer, m: &Machine<T>, ovr: bool) {
    let dt = dtype_of(T::PRECISION);
    match m {
        Machine::Exact { support, parts } => {
            w.push("support".into(), dt, support);
            for (c, p) in parts.iter().enumerate() {
                w.push(part_name(ovr, c, "alpha"), dt, &p.weights);
                w.push(part_name(ovr, c, "labels"), dt, &p.labels);
            }
        }
        Machine::Inexact { map, parts } => {
            w.push("rff.w".into(), dt, &map.w);
            w.push("rff.b".into(), dt, &map.b);
            for (c, p) in parts.iter().enumerate() {
                w.push(part_name(ovr, c, "theta"), dt, &p.weights);
            }
        }
    }
}

/// Serializes a model into the container format.
pub fn to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let ovr = model.meta.is_ovr();
    let mut w = Writer {
        entries: Vec::new(),
        body: Vec::new(),
    };
    if let Some(z) = &model.zscore {
        w.push("zscore.mean".into(), Dtype::F64, &z.mean);
        w.push("zscore.std".into(), Dtype::F64, &z.std);
    }
    match &model.predictor {
        Predictor::Single(m) => write_machine(&mut w, m, ovr),
        Predictor::Double(m) => write_machine(&mut w, m, ovr),
    }
    let header = ModelHeader {
        model: model.meta.clone(),
        has_zscore: model.zscore.is_some(),
        arrays: w.entries,
    };
    let meta = serde_json::to_vec(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut out = Vec::with_capacity(PREAMBLE + meta.len() + w.body.len() + DIGEST);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&w.body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parses the preamble and metadata; returns the header and where the
/// array payload starts.
fn parse_header(bytes: &[u8]) -> Result<(ModelHeader, usize)> {
    if bytes.len() < PREAMBLE || &bytes[..8] != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let meta_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let meta_end = PREAMBLE
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::ModelFormat("truncated model file (metadata)".into()))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[PREAMBLE..meta_end])
        .map_err(|e| Error::ModelFormat(format!("corrupt metadata: {e}")))?;
    Ok((header, meta_end))
}

/// Deserializes and integrity-checks a model.
pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let (header, start) = parse_header(bytes)?;
    let expected = start + header.payload_len() + DIGEST;
    if bytes.len() != expected {
        return Err(Error::ModelFormat(format!(
            "model file is {} bytes, manifest implies {expected} (truncated or corrupt)",
            bytes.len()
        )));
    }
    let body_end = bytes.len() - DIGEST;
    if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
        return Err(Error::ModelFormat("checksum mismatch".into()));
    }
    let mut arrays = Arrays {
        entries: &header.arrays,
        bytes: &bytes[start..body_end],
    };
    let zscore = if header.has_zscore {
        Some(ZScore {
            mean: arrays.get::<f64>("zscore.mean", Dtype::F64)?,
            std: arrays.get::<f64>("zscore.std", Dtype::F64)?,
        })
    } else {
        None
    };
    let meta = header.model.clone();
    let predictor = match meta.precision {
        Precision::Single => Predictor::Single(read_machine::<f32>(&meta, &mut arrays)?),
        Precision::Double => Predictor::Double(read_machine::<f64>(&meta, &mut arrays)?),
    };
    if let Some(z) = &zscore {
        if z.mean.len() != meta.dim || z.std.len() != meta.dim {
            return Err(Error::ModelFormat("normalization length differs from the feature dimension".into()));
        }
    }
    Ok(TrainedModel {
        meta,
        zscore,
        predictor,
    })
}

struct Arrays<'a> {
    entries: &'a [ArrayEntry],
    bytes: &'a [u8],
}

impl Arrays<'_> {
    fn get<T: LeBytes>(&mut self, name: &str, dtype: Dtype) -> Result<Vec<T>> {
        let mut off = 0;
        for e in self.entries {
            let len = e.len * e.dtype.width();
            if e.name == name {
                if e.dtype != dtype {
                    return Err(Error::ModelFormat(format!(
                        "array {name} has dtype {:?}, expected {dtype:?}",
                        e.dtype
                    )));
                }
                return Ok(T::take(&self.bytes[off..off + len]));
            }
            off += len;
        }
        Err(Error::ModelFormat(format!("missing array {name}")))
    }
}

fn read_machine<T: Real + LeBytes>(
    meta: &ModelMeta,
    arrays: &mut Arrays<'_>,
) -> Result<Machine<T>> {
    let dt = dtype_of(T::PRECISION);
    let ovr = meta.is_ovr();
    let n_parts = meta.n_parts();
    let check = |name: &str, got: usize, want: usize| -> Result<()> {
        if got != want {
            return Err(Error::ModelFormat(format!("array {name} has length {got}, expected {want}")));
        }
        Ok(())
    };
    match meta.mode {
        Mode::Exact => {
            let support: Vec<T> = arrays.get("support", dt)?;
            check("support", support.len(), meta.n_train * meta.dim)?;
            let mut parts = Vec::with_capacity(n_parts);
            for c in 0..n_parts {
                let an = part_name(ovr, c, "alpha");
                let weights: Vec<T> = arrays.get(&an, dt)?;
                check(&an, weights.len(), meta.n_train)?;
                let labels = arrays.get(&part_name(ovr, c, "labels"), dt)?;
                parts.push(Part { weights, labels });
            }
            Ok(Machine::Exact { support, parts })
        }
        Mode::Inexact => {
            let m = meta
                .rff_dim
                .ok_or_else(|| Error::ModelFormat("inexact model without a feature count".into()))?;
            let w: Vec<T> = arrays.get("rff.w", dt)?;
            let b: Vec<T> = arrays.get("rff.b", dt)?;
            check("rff.b", b.len(), m)?;
            let map = RffMap::from_parts(meta.kernel, meta.dim, meta.seeds.rff, w, b)?;
            let mut parts = Vec::with_capacity(n_parts);
            for c in 0..n_parts {
                let tn = part_name(ovr, c, "theta");
                let weights: Vec<T> = arrays.get(&tn, dt)?;
                check(&tn, weights.len(), m)?;
                parts.push(Part {
                    weights,
                    labels: Vec::new(),
                });
            }
            Ok(Machine::Inexact { map, parts })
        }
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    from_bytes(&fs::read(path)?)
}

/// Reads only the preamble and metadata, then checks the file length
/// against the manifest without reading the arrays.
pub fn inspect_model(path: impl AsRef<Path>) -> Result<ModelHeader> {
    let path = path.as_ref();
    let mut f = fs::File::open(path)?;
    let total = f.metadata()?.len() as usize;
    let mut pre = [0u8; PREAMBLE];
    f.read_exact(&mut pre)
        .map_err(|_| Error::ModelFormat("truncated model file (preamble)".into()))?;
    let meta_len = u64::from_le_bytes(pre[12..20].try_into().expect("8 bytes")) as usize;
    if PREAMBLE.saturating_add(meta_len) > total {
        // still report magic/version problems first
        parse_header(&pre)?;
        return Err(Error::ModelFormat("truncated model file (metadata)".into()));
    }
    let mut buf = pre.to_vec();
    buf.resize(PREAMBLE + meta_len, 0);
    f.read_exact(&mut buf[PREAMBLE..])?;
    let (header, start) = parse_header(&buf)?;
    let expected = start + header.payload_len() + DIGEST;
    if total != expected {
        return Err(Error::ModelFormat(format!(
            "model file is {total} bytes, manifest implies {expected} (truncated or corrupt)"
        )));
    }
    Ok(header)
}
