//! C ABI over the `dualkern` trainer.
//!
//! Models are opaque `DkModel` handles created by [`dk_train_dense`] or
//! [`dk_model_load`] and released with [`dk_model_free`]. Every fallible call
//! returns a `DkStatus` code; the message of the last failure on the calling
//! thread is available from [`dk_last_error_message`]. Feature matrices are
//! dense, row-major `n x d` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dualkern::data::{Dataset, Features};
use dualkern::kernels::KernelFamily;
use dualkern::model::Mode;
use dualkern::solver::PrimalEval;
use dualkern::{load_model, save_model, train_model, Error, LossKind, Precision, TrainConfig, TrainedModel};

/// Opaque trained model.
pub struct DkModel {
    inner: TrainedModel,
}

pub type DkStatus = i32;

pub const DK_OK: DkStatus = 0;
pub const DK_ERR_NULL: DkStatus = 1;
pub const DK_ERR_PARAM: DkStatus = 2;
pub const DK_ERR_DATA: DkStatus = 3;
pub const DK_ERR_NUMERICAL: DkStatus = 4;
pub const DK_ERR_MODEL_FORMAT: DkStatus = 5;
pub const DK_ERR_IO: DkStatus = 6;
pub const DK_ERR_UNSUPPORTED: DkStatus = 7;
pub const DK_ERR_PANIC: DkStatus = 8;

pub const DK_LOSS_SQUARE: i32 = 0;
pub const DK_LOSS_LP: i32 = 1;
pub const DK_LOSS_L1: i32 = 2;
pub const DK_LOSS_HUBER: i32 = 3;
pub const DK_LOSS_SVR: i32 = 4;
pub const DK_LOSS_HINGE: i32 = 5;
pub const DK_LOSS_SQUARED_HINGE: i32 = 6;
pub const DK_LOSS_LOGISTIC: i32 = 7;

pub const DK_MODE_EXACT: i32 = 0;
pub const DK_MODE_INEXACT: i32 = 1;

pub const DK_KERNEL_GAUSSIAN: i32 = 0;
pub const DK_KERNEL_LAPLACIAN: i32 = 1;

pub const DK_PRECISION_DOUBLE: i32 = 0;
pub const DK_PRECISION_SINGLE: i32 = 1;

/// Training settings. Initialize with [`dk_train_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DkTrainConfig {
    /// One of the `DK_LOSS_*` values.
    pub loss: i32,
    /// Lp exponent, Huber threshold or SVR insensitivity; ignored otherwise.
    pub loss_param: f64,
    pub lambda: f64,
    /// `DK_MODE_*`.
    pub mode: i32,
    /// `DK_KERNEL_*`.
    pub kernel: i32,
    /// Bandwidth; a value `<= 0` selects the median heuristic.
    pub sigma: f64,
    pub rff_dim: usize,
    /// 0 picks the per-loss default.
    pub block_size: usize,
    pub iterations: usize,
    pub seed_partition: u64,
    pub seed_rff: u64,
    /// `DK_PRECISION_*`.
    pub precision: i32,
    /// Non-zero enables z-score normalization.
    pub zscore: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DkStatus {
    match e {
        Error::InvalidParameter(_) => DK_ERR_PARAM,
        Error::Unsupported(_) => DK_ERR_UNSUPPORTED,
        Error::Numerical(_) | Error::DomainViolation { .. } => DK_ERR_NUMERICAL,
        Error::ModelFormat(_) => DK_ERR_MODEL_FORMAT,
        Error::Io(_) => DK_ERR_IO,
        Error::DimensionMismatch { .. } | Error::DegenerateData(_) | Error::Parse { .. } | Error::Data(_) => {
            DK_ERR_DATA
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), (DkStatus, String)>) -> DkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DK_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            DK_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (DkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (DkStatus, String) {
    (DK_ERR_NULL, format!("{what} is a null pointer"))
}

fn param_err(msg: String) -> (DkStatus, String) {
    (DK_ERR_PARAM, msg)
}

/// Fills `out` with the default settings.
///
/// # Safety
/// `out` must be null or point to writable memory for one `DkTrainConfig`.
#[no_mangle]
pub unsafe extern "C" fn dk_train_config_default(out: *mut DkTrainConfig) -> DkStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null_err("config"))?;
        let d = TrainConfig::default();
        *out = DkTrainConfig {
            loss: DK_LOSS_SQUARE,
            loss_param: f64::NAN,
            lambda: d.lambda,
            mode: DK_MODE_EXACT,
            kernel: DK_KERNEL_GAUSSIAN,
            sigma: 0.0,
            rff_dim: d.rff_dim,
            block_size: 0,
            iterations: d.iterations,
            seed_partition: d.seeds.partition,
            seed_rff: d.seeds.rff,
            precision: DK_PRECISION_DOUBLE,
            zscore: 1,
        };
        Ok(())
    })
}

fn to_config(c: &DkTrainConfig) -> Result<TrainConfig, (DkStatus, String)> {
    let param = |default: f64| if c.loss_param.is_nan() { default } else { c.loss_param };
    let loss = match c.loss {
        DK_LOSS_SQUARE => LossKind::Square,
        DK_LOSS_LP => LossKind::lp(param(3.0)).map_err(lib_err)?,
        DK_LOSS_L1 => LossKind::L1Reg,
        DK_LOSS_HUBER => LossKind::huber(param(1.0)).map_err(lib_err)?,
        DK_LOSS_SVR => LossKind::svr(param(0.25)).map_err(lib_err)?,
        DK_LOSS_HINGE => LossKind::HingeL1,
        DK_LOSS_SQUARED_HINGE => LossKind::SquaredHingeL2,
        DK_LOSS_LOGISTIC => LossKind::Logistic,
        other => return Err(param_err(format!("unknown loss code {other}"))),
    };
    let mode = match c.mode {
        DK_MODE_EXACT => Mode::Exact,
        DK_MODE_INEXACT => Mode::Inexact,
        other => return Err(param_err(format!("unknown mode code {other}"))),
    };
    let kernel = match c.kernel {
        DK_KERNEL_GAUSSIAN => KernelFamily::Gaussian,
        DK_KERNEL_LAPLACIAN => KernelFamily::Laplacian,
        other => return Err(param_err(format!("unknown kernel code {other}"))),
    };
    let precision = match c.precision {
        DK_PRECISION_DOUBLE => Precision::Double,
        DK_PRECISION_SINGLE => Precision::Single,
        other => return Err(param_err(format!("unknown precision code {other}"))),
    };
    let mut cfg = TrainConfig {
        loss,
        lambda: c.lambda,
        mode,
        kernel,
        sigma: (c.sigma > 0.0).then_some(c.sigma),
        rff_dim: c.rff_dim,
        block_size: (c.block_size > 0).then_some(c.block_size),
        iterations: c.iterations,
        precision,
        zscore: c.zscore != 0,
        primal_eval: PrimalEval::Off,
        ..TrainConfig::default()
    };
    cfg.seeds.partition = c.seed_partition;
    cfg.seeds.rff = c.seed_rff;
    Ok(cfg)
}

unsafe fn matrix<'a>(x: *const f64, n: usize, d: usize) -> Result<&'a [f64], (DkStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if x.is_null() {
        return Err(null_err("feature matrix"));
    }
    let len = n
        .checked_mul(d)
        .ok_or_else(|| param_err("n * d overflows".into()))?;
    Ok(unsafe { std::slice::from_raw_parts(x, len) })
}

/// Trains on a dense row-major `n x d` matrix `x` with targets `y` and stores
/// a new handle in `*out`.
///
/// # Safety
/// `x` must hold `n * d` doubles, `y` must hold `n` doubles, `config` must
/// point to a valid `DkTrainConfig` and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dk_train_dense(
    x: *const f64,
    n: usize,
    d: usize,
    y: *const f64,
    config: *const DkTrainConfig,
    out: *mut *mut DkModel,
) -> DkStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null_err("out"))?;
        *out = ptr::null_mut();
        let c = unsafe { config.as_ref() }.ok_or_else(|| null_err("config"))?;
        if n == 0 || d == 0 {
            return Err((DK_ERR_DATA, "training needs n >= 1 and d >= 1".into()));
        }
        let xs = unsafe { matrix(x, n, d) }?;
        if y.is_null() {
            return Err(null_err("labels"));
        }
        let ys = unsafe { std::slice::from_raw_parts(y, n) };
        let cfg = to_config(c)?;
        let features = Features::dense(xs.to_vec(), d).map_err(lib_err)?;
        let data = Dataset::new(features, ys.to_vec()).map_err(lib_err)?;
        let model = train_model(&cfg, &data, None, &mut |_| ControlFlow::Continue(())).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DkModel { inner: model }));
        Ok(())
    })
}

unsafe fn path_arg(p: *const c_char) -> Result<String, (DkStatus, String)> {
    if p.is_null() {
        return Err(null_err("path"));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map(str::to_owned)
        .map_err(|_| param_err("path is not valid UTF-8".into()))
}

/// Loads a model file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dk_model_load(path: *const c_char, out: *mut *mut DkModel) -> DkStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null_err("out"))?;
        *out = ptr::null_mut();
        let p = unsafe { path_arg(path) }?;
        let model = load_model(&p).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(DkModel { inner: model }));
        Ok(())
    })
}

/// Writes a model file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dk_model_save(model: *const DkModel, path: *const c_char) -> DkStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null_err("model"))?;
        let p = unsafe { path_arg(path) }?;
        save_model(&m.inner, &p).map_err(lib_err)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dk_model_free(model: *mut DkModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Feature dimension the model expects.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dk_model_dim(model: *const DkModel, out: *mut usize) -> DkStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null_err("model"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null_err("out"))?;
        *out = m.inner.meta.dim;
        Ok(())
    })
}

#[derive(Clone, Copy)]
enum Output {
    Raw,
    Label,
    Proba,
}

unsafe fn predict(
    model: *const DkModel,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
    kind: Output,
) -> DkStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null_err("model"))?;
        let xs = unsafe { matrix(x, n, d) }?;
        if n == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        let features = Features::dense(xs.to_vec(), d).map_err(lib_err)?;
        let v = match kind {
            Output::Raw => m.inner.predict_raw(&features),
            Output::Label => m.inner.predict_label(&features),
            Output::Proba => m.inner.predict_proba(&features),
        }
        .map_err(lib_err)?;
        unsafe { std::slice::from_raw_parts_mut(out, n) }.copy_from_slice(&v);
        Ok(())
    })
}

/// Raw decision or regression values for `n` rows into `out[0..n]`.
///
/// # Safety
/// `x` must hold `n * d` doubles and `out` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn dk_predict_raw(model: *const DkModel, x: *const f64, n: usize, d: usize, out: *mut f64) -> DkStatus {
    unsafe { predict(model, x, n, d, out, Output::Raw) }
}

/// Class labels (classification models only).
///
/// # Safety
/// As for [`dk_predict_raw`].
#[no_mangle]
pub unsafe extern "C" fn dk_predict_label(model: *const DkModel, x: *const f64, n: usize, d: usize, out: *mut f64) -> DkStatus {
    unsafe { predict(model, x, n, d, out, Output::Label) }
}

/// Positive-class probabilities (binary logistic models only).
///
/// # Safety
/// As for [`dk_predict_raw`].
#[no_mangle]
pub unsafe extern "C" fn dk_predict_proba(model: *const DkModel, x: *const f64, n: usize, d: usize, out: *mut f64) -> DkStatus {
    unsafe { predict(model, x, n, d, out, Output::Proba) }
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// always NUL-terminated when `len > 0`). Returns the full message length in
/// bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
                *buf.add(k) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
