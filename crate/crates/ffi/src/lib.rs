//! C ABI for robust-fpca.
//!
//! Samples and fits are opaque handles owned by the caller and released with
//! the matching `_free` function. Every fallible call returns an
//! [`RfpcaStatus`]; on failure [`rfpca_last_error`] describes what went wrong
//! on the calling thread. Array outputs are copied into caller buffers whose
//! length is checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use robust_fpca::engine::{fit, Bandwidth, Curve, FitConfig, FpcaFit, Ridge, SparseFunctionalSample, Variant};
use robust_fpca::error::FpcaError;
use robust_fpca::io;

/// Opaque set of curves.
pub struct RfpcaSample {
    inner: SparseFunctionalSample,
}

/// Opaque fitted model.
pub struct RfpcaFit {
    inner: FpcaFit,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfpcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    EstimationFailed = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfpcaVariant {
    Robust = 0,
    LeastSquares = 1,
}

/// Fit options. Non-positive bandwidths request cross-validation, a zero
/// component count applies the `tau` rule and a negative `delta` uses the
/// default relative ridge.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfpcaOptions {
    pub variant: RfpcaVariant,
    pub h_mean: f64,
    pub h_cov: f64,
    pub grid_points: u32,
    pub tau: f64,
    pub n_components: u32,
    pub delta: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &FpcaError) -> RfpcaStatus {
    match err {
        FpcaError::InvalidConfig(_) => RfpcaStatus::InvalidConfig,
        FpcaError::InvalidInput(_)
        | FpcaError::Parse { .. }
        | FpcaError::EmptyFile(_)
        | FpcaError::DuplicateTime { .. } => RfpcaStatus::InvalidInput,
        FpcaError::Io(_) | FpcaError::MissingArtifact(_) => RfpcaStatus::Io,
        _ => RfpcaStatus::EstimationFailed,
    }
}

/// Runs `f`, records any error and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (RfpcaStatus, String)>) -> RfpcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RfpcaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RfpcaStatus::Panic
        }
    }
}

fn lib_err(e: FpcaError) -> (RfpcaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RfpcaStatus, String) {
    (RfpcaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (RfpcaStatus, String)> {
    if buf.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err((
            RfpcaStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rfpca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rfpca_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rfpca_options_default() -> RfpcaOptions {
    let d = FitConfig::default();
    RfpcaOptions {
        variant: RfpcaVariant::Robust,
        h_mean: 0.0,
        h_cov: 0.0,
        grid_points: d.grid_points as u32,
        tau: d.tau,
        n_components: 0,
        delta: -1.0,
        seed: d.seed,
    }
}

fn to_config(o: &RfpcaOptions) -> FitConfig {
    let variant = match o.variant {
        RfpcaVariant::Robust => Variant::Robust,
        RfpcaVariant::LeastSquares => Variant::LeastSquares,
    };
    let bw = |h: f64| if h > 0.0 { Bandwidth::Fixed(h) } else { Bandwidth::Auto };
    let mut c = FitConfig::for_variant(variant);
    c.h_mean = bw(o.h_mean);
    c.h_cov = bw(o.h_cov);
    c.grid_points = o.grid_points as usize;
    c.tau = o.tau;
    c.n_components = (o.n_components > 0).then_some(o.n_components as usize);
    if o.delta >= 0.0 {
        c.ridge = Ridge::Absolute(o.delta);
    }
    c.seed = o.seed;
    c
}

/// Builds a sample from `n` observations. `curve[i]` identifies the curve of
/// observation `i`; curves are ordered by first appearance. The domain is
/// the observed range unless `a < b` is given.
///
/// # Safety
/// `curve`, `t` and `x` must point to `n` readable values and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn rfpca_sample_from_arrays(
    curve: *const u64,
    t: *const f64,
    x: *const f64,
    n: usize,
    a: f64,
    b: f64,
    out: *mut *mut RfpcaSample,
) -> RfpcaStatus {
    guard(|| {
        if curve.is_null() || t.is_null() || x.is_null() {
            return Err(null("input array"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err((RfpcaStatus::InvalidInput, "no observations".into()));
        }
        let (ids, ts, xs) = (
            std::slice::from_raw_parts(curve, n),
            std::slice::from_raw_parts(t, n),
            std::slice::from_raw_parts(x, n),
        );
        let mut order: Vec<u64> = Vec::new();
        let mut groups: std::collections::HashMap<u64, (Vec<f64>, Vec<f64>)> = Default::default();
        for i in 0..n {
            let g = groups.entry(ids[i]).or_insert_with(|| {
                order.push(ids[i]);
                (Vec::new(), Vec::new())
            });
            g.0.push(ts[i]);
            g.1.push(xs[i]);
        }
        let curves = order
            .into_iter()
            .map(|id| {
                let (t, x) = groups.remove(&id).expect("grouped");
                Curve::new(id.to_string(), t, x)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(lib_err)?;
        let sample = if a < b {
            SparseFunctionalSample::new(curves, (a, b))
        } else {
            SparseFunctionalSample::with_observed_domain(curves)
        }
        .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RfpcaSample { inner: sample }));
        Ok(())
    })
}

/// Reads a `curve_id,t,x` table.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn rfpca_sample_from_csv(path: *const c_char, out: *mut *mut RfpcaSample) -> RfpcaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (RfpcaStatus::InvalidInput, "path is not UTF-8".to_string()))?;
        let sample = io::ingest(Path::new(p), None).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RfpcaSample { inner: sample }));
        Ok(())
    })
}

/// Number of curves, 0 for a null handle.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfpca_sample_len(sample: *const RfpcaSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `sample` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rfpca_sample_free(sample: *mut RfpcaSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Fits the model. `options` may be null for the defaults.
///
/// # Safety
/// `sample` must be a live handle, `options` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit(
    sample: *const RfpcaSample,
    options: *const RfpcaOptions,
    out: *mut *mut RfpcaFit,
) -> RfpcaStatus {
    guard(|| {
        let s = sample.as_ref().ok_or_else(|| null("sample"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| rfpca_options_default());
        let f = fit(&s.inner, &to_config(&opts)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RfpcaFit { inner: f }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_free(fit: *mut RfpcaFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Grid size `M`, 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_grid_len(fit: *const RfpcaFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.mean.grid.m)
}

/// Retained components `K`, 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_n_components(fit: *const RfpcaFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.n_components())
}

/// Number of curves the fit was estimated on.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_n_curves(fit: *const RfpcaFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.scores.ids.len())
}

/// Bandwidths used for the mean and the covariance.
///
/// # Safety
/// `fit` must be a live handle; `h_mean` and `h_cov` writable.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_bandwidths(fit: *const RfpcaFit, h_mean: *mut f64, h_cov: *mut f64) -> RfpcaStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if h_mean.is_null() || h_cov.is_null() {
            return Err(null("output"));
        }
        *h_mean = f.inner.h_mean;
        *h_cov = f.inner.h_cov;
        Ok(())
    })
}

unsafe fn with_fit(
    fit: *const RfpcaFit,
    buf: *mut f64,
    len: usize,
    values: impl FnOnce(&FpcaFit) -> Result<Vec<f64>, (RfpcaStatus, String)>,
) -> RfpcaStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let v = values(&f.inner)?;
        copy_out(&v, buf, len)
    })
}

/// Grid points, `M` values.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_grid(fit: *const RfpcaFit, buf: *mut f64, len: usize) -> RfpcaStatus {
    with_fit(fit, buf, len, |f| Ok(f.mean.grid.points()))
}

/// Estimated mean on the grid, `M` values.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_mean(fit: *const RfpcaFit, buf: *mut f64, len: usize) -> RfpcaStatus {
    with_fit(fit, buf, len, |f| Ok(f.mean.values.clone()))
}

/// Covariance surface on the grid, `M·M` values in row-major order.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_covariance(fit: *const RfpcaFit, buf: *mut f64, len: usize) -> RfpcaStatus {
    with_fit(fit, buf, len, |f| Ok(f.surface.matrix.transpose().iter().copied().collect()))
}

/// All `M` eigenvalues, descending.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_eigenvalues(fit: *const RfpcaFit, buf: *mut f64, len: usize) -> RfpcaStatus {
    with_fit(fit, buf, len, |f| Ok(f.eigen.values.clone()))
}

/// Eigenfunction `k` (0-based) on the grid, `M` values.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_eigenfunction(
    fit: *const RfpcaFit,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> RfpcaStatus {
    with_fit(fit, buf, len, |f| {
        if k >= f.eigen.values.len() {
            return Err((RfpcaStatus::InvalidInput, format!("component {k} out of range")));
        }
        Ok(f.eigen.function(k))
    })
}

/// Training scores, `N·K` values in row-major order.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_scores(fit: *const RfpcaFit, buf: *mut f64, len: usize) -> RfpcaStatus {
    with_fit(fit, buf, len, |f| Ok(f.scores.scores.transpose().iter().copied().collect()))
}

/// Scores of the curves in `sample`, `N·K` values in row-major order.
///
/// # Safety
/// `fit` and `sample` must be live handles and `buf` hold `len` writable
/// values.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_predict(
    fit: *const RfpcaFit,
    sample: *const RfpcaSample,
    buf: *mut f64,
    len: usize,
) -> RfpcaStatus {
    let Some(s) = sample.as_ref() else {
        set_error("sample is null");
        return RfpcaStatus::NullPointer;
    };
    with_fit(fit, buf, len, |f| {
        let scores = f.predict(&s.inner).map_err(lib_err)?;
        Ok(scores.scores.transpose().iter().copied().collect())
    })
}

/// Writes mean, covariance, eigen, scores and fitted files into `dir`.
///
/// # Safety
/// `fit` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rfpca_fit_write(fit: *const RfpcaFit, dir: *const c_char) -> RfpcaStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if dir.is_null() {
            return Err(null("dir"));
        }
        let d = CStr::from_ptr(dir)
            .to_str()
            .map_err(|_| (RfpcaStatus::InvalidInput, "path is not UTF-8".to_string()))?;
        std::fs::create_dir_all(d).map_err(|e| (RfpcaStatus::Io, format!("{d}: {e}")))?;
        io::write_fit_artifacts(&f.inner, Path::new(d)).map_err(lib_err)
    })
}
