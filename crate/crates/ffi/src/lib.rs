//! C ABI over the metric kernels and the MMHM composite.
//!
//! Every entry point returns a [`GbStatus`]. On failure the message is kept
//! in a thread-local slot readable through [`gb_last_error`]. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use genbench::composite::{mmhm, BoundsRegistry, MetricId, DEFAULT_EPSILON};
use genbench::metrics::{
    accumulate_stats, frechet_distance, inception_score, FeatureMatrix, GaussianStats,
    MetricReport, ProbabilityMatrix,
};
use genbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InsufficientSamples = 3,
    DimensionMismatch = 4,
    NotPsd = 5,
    InvalidBounds = 6,
    Io = 7,
    Parse = 8,
    Panic = 9,
    Other = 10,
}

/// Mean and covariance of a feature set.
pub struct GbGaussianStats(GaussianStats);

/// Per-metric normalization bounds.
pub struct GbBoundsRegistry(BoundsRegistry);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GbStatus {
    match err {
        Error::InvalidInput(_) | Error::Validation(_) | Error::UnknownMetric(_) => {
            GbStatus::InvalidInput
        }
        Error::InsufficientSamples { .. } => GbStatus::InsufficientSamples,
        Error::DimensionMismatch(_) => GbStatus::DimensionMismatch,
        Error::NotPsd { .. } => GbStatus::NotPsd,
        Error::InvalidBounds { .. } => GbStatus::InvalidBounds,
        Error::Io { .. } => GbStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => GbStatus::Parse,
        _ => GbStatus::Other,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GbStatus::Ok
        }
        Ok(Err(Fail::Null(arg))) => {
            set_last_error(format!("null pointer passed for `{arg}`"));
            GbStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            GbStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a>(ptr: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Fail::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, Fail> {
    rows.checked_mul(cols)
        .ok_or_else(|| Fail::Core(Error::InvalidInput(format!("{rows}x{cols} overflows"))))
}

fn out<'a, T>(ptr: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: caller guarantees a non-null pointer is valid for writes.
    unsafe { ptr.as_mut() }.ok_or(Fail::Null(name))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Gaussian statistics of a row-major `rows x cols` feature matrix.
///
/// # Safety
/// `features` must point to `rows * cols` doubles; `out_stats` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_stats_from_features(
    features: *const f64,
    rows: usize,
    cols: usize,
    out_stats: *mut *mut GbGaussianStats,
) -> GbStatus {
    guard(|| {
        let slot = out(out_stats, "out_stats")?;
        *slot = std::ptr::null_mut();
        let data = slice(features, checked_len(rows, cols)?, "features")?;
        let m = FeatureMatrix::from_rows_indexed(rows, cols, data.to_vec())?;
        let stats = accumulate_stats(&m)?;
        *slot = Box::into_raw(Box::new(GbGaussianStats(stats)));
        Ok(())
    })
}

/// Statistics from a known mean (`dim`) and row-major covariance (`dim * dim`).
///
/// # Safety
/// `mean` and `cov` must point to `dim` and `dim * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gb_stats_from_moments(
    mean: *const f64,
    cov: *const f64,
    dim: usize,
    out_stats: *mut *mut GbGaussianStats,
) -> GbStatus {
    guard(|| {
        let slot = out(out_stats, "out_stats")?;
        *slot = std::ptr::null_mut();
        let mean = slice(mean, dim, "mean")?;
        let cov = slice(cov, checked_len(dim, dim)?, "cov")?;
        let stats = GaussianStats::analytic(mean.to_vec(), cov.to_vec())?;
        *slot = Box::into_raw(Box::new(GbGaussianStats(stats)));
        Ok(())
    })
}

/// Feature dimension of a stats handle.
///
/// # Safety
/// `stats` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gb_stats_dim(stats: *const GbGaussianStats, out_dim: *mut usize) -> GbStatus {
    guard(|| {
        let s = stats.as_ref().ok_or(Fail::Null("stats"))?;
        *out(out_dim, "out_dim")? = s.0.dim();
        Ok(())
    })
}

/// # Safety
/// `stats` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gb_stats_free(stats: *mut GbGaussianStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Fréchet distance between two Gaussians.
///
/// # Safety
/// `a` and `b` must be live handles; `out_distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_frechet_distance(
    a: *const GbGaussianStats,
    b: *const GbGaussianStats,
    out_distance: *mut f64,
) -> GbStatus {
    guard(|| {
        let a = a.as_ref().ok_or(Fail::Null("a"))?;
        let b = b.as_ref().ok_or(Fail::Null("b"))?;
        let slot = out(out_distance, "out_distance")?;
        *slot = frechet_distance(&a.0, &b.0)?;
        Ok(())
    })
}

/// Inception Score over a row-major `rows x classes` probability matrix.
///
/// # Safety
/// `probs` must point to `rows * classes` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_inception_score(
    probs: *const f64,
    rows: usize,
    classes: usize,
    splits: usize,
    out_mean: *mut f64,
    out_std: *mut f64,
) -> GbStatus {
    guard(|| {
        let data = slice(probs, checked_len(rows, classes)?, "probs")?;
        let mean = out(out_mean, "out_mean")?;
        let std = out(out_std, "out_std")?;
        let p = ProbabilityMatrix::new(rows, classes, data.to_vec())?;
        let (m, s) = inception_score(&p, splits)?;
        *mean = m;
        *std = s;
        Ok(())
    })
}

/// Bounds measured over the ImageNet benchmark.
///
/// # Safety
/// `out_bounds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bounds_imagenet(out_bounds: *mut *mut GbBoundsRegistry) -> GbStatus {
    guard(|| {
        let slot = out(out_bounds, "out_bounds")?;
        *slot = Box::into_raw(Box::new(GbBoundsRegistry(BoundsRegistry::imagenet_reference())));
        Ok(())
    })
}

/// Load a `bounds.json` file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out_bounds` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bounds_load(
    path: *const c_char,
    out_bounds: *mut *mut GbBoundsRegistry,
) -> GbStatus {
    guard(|| {
        let slot = out(out_bounds, "out_bounds")?;
        *slot = std::ptr::null_mut();
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidInput("path is not UTF-8".into()))?;
        let reg = BoundsRegistry::load(path)?;
        *slot = Box::into_raw(Box::new(GbBoundsRegistry(reg)));
        Ok(())
    })
}

/// # Safety
/// `bounds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gb_bounds_free(bounds: *mut GbBoundsRegistry) {
    if !bounds.is_null() {
        drop(Box::from_raw(bounds));
    }
}

/// MMHM composite for one run. `epsilon <= 0` selects the default 0.001.
/// `out_utilities`, if not null, receives the four utilities in
/// FID, IS, CLIP, PICK order.
///
/// # Safety
/// `bounds` must be a live handle; `out_score` must be writable;
/// `out_utilities` must be null or point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gb_mmhm(
    bounds: *const GbBoundsRegistry,
    fid: f64,
    is_mean: f64,
    clip: f64,
    pick: f64,
    epsilon: f64,
    out_score: *mut f64,
    out_utilities: *mut f64,
) -> GbStatus {
    guard(|| {
        let b = bounds.as_ref().ok_or(Fail::Null("bounds"))?;
        let slot = out(out_score, "out_score")?;
        let report = MetricReport::new(fid, is_mean, 0.0, clip, pick);
        if !report.is_finite() {
            return Err(Error::InvalidInput("metric values must be finite".into()).into());
        }
        let eps = if epsilon > 0.0 { epsilon } else { DEFAULT_EPSILON };
        let score = mmhm(&report, &b.0, eps)?;
        *slot = score.value;
        if !out_utilities.is_null() {
            std::slice::from_raw_parts_mut(out_utilities, MetricId::ALL.len())
                .copy_from_slice(&score.utilities);
        }
        Ok(())
    })
}
