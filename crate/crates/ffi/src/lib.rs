//! C ABI for volmix.
//!
//! Every fallible function returns a [`VolmixStatus`]. On failure the message
//! is kept per thread and can be read with [`volmix_last_error`]. Fitted
//! models are opaque handles that the caller releases with the matching
//! `_free` function. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use volmix::evaluation;
use volmix::features::{self, PcaModel};
use volmix::garch_midas::{self, FitDocument, FitOptions, MidasData, MidasParams, MidasSpec};
use volmix::realized_vol;
use volmix::transformer::TransformerModel;
use volmix::{Error, Matrix};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolmixStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Invalid input data or arguments; the CLI reports these with exit code 2.
    InvalidInput = 2,
    /// Numerical failure such as non-convergence; exit code 3 in the CLI.
    Numerical = 3,
    /// An output buffer is shorter than required.
    BufferTooSmall = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Loss measures for one forecast series.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VolmixLosses {
    pub n: usize,
    pub mse: f64,
    pub hmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub qlike: f64,
    pub r2log: f64,
}

/// Scalar parameters and fit statistics of a GARCH-MIDAS fit.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VolmixMidasSummary {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub lags: usize,
    pub covariates: usize,
    pub converged: bool,
}

/// A fitted GARCH-MIDAS model.
pub struct VolmixMidasFit {
    doc: FitDocument,
    params: MidasParams,
}

/// A fitted principal-component model.
pub struct VolmixPca {
    model: PcaModel,
}

/// A trained transformer regressor with its feature and target scaling.
pub struct VolmixTransformer {
    model: TransformerModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Input(String),
    Buffer { need: usize, got: usize },
    Lib(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Lib(e.into())
    }
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VolmixStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return VolmixStatus::Ok,
        Ok(Err(Failure::Null(name))) => (VolmixStatus::NullPointer, format!("`{name}` is null")),
        Ok(Err(Failure::Input(msg))) => (VolmixStatus::InvalidInput, msg),
        Ok(Err(Failure::Buffer { need, got })) => (
            VolmixStatus::BufferTooSmall,
            format!("output buffer holds {got} values, {need} needed"),
        ),
        Ok(Err(Failure::Lib(e))) => {
            let status = if e.exit_code() == 3 {
                VolmixStatus::Numerical
            } else {
                VolmixStatus::InvalidInput
            };
            (status, e.to_string())
        }
        Err(_) => (VolmixStatus::Panic, "internal panic".to_string()),
    };
    set_error(msg);
    status
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a, T>(ptr: *mut T, len: usize, need: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(Failure::Buffer { need, got: len });
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(name))
}

unsafe fn handle<'a, T>(ptr: *const T) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null("handle"))
}

unsafe fn path<'a>(ptr: *const c_char) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::Input("path is not valid UTF-8".into()))
}

unsafe fn matrix(ptr: *const f64, rows: usize, cols: usize, name: &'static str) -> Result<Matrix, Failure> {
    let data = slice(ptr, rows * cols, name)?;
    Ok(Matrix::from_vec(rows, cols, data.to_vec()))
}

unsafe fn give<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = out_ref(out, "out")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn volmix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
/// Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn volmix_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Normalised beta lag weights for `lags` lags into `out[0..lags]`.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn volmix_beta_weights(
    lags: usize,
    omega1: f64,
    omega2: f64,
    out: *mut f64,
    out_len: usize,
) -> VolmixStatus {
    guard(|| {
        let w = garch_midas::beta_weights(lags, omega1, omega2)?;
        out_slice(out, out_len, w.len(), "out")?[..w.len()].copy_from_slice(&w);
        Ok(())
    })
}

/// Realized variance of one day's bar prices (in-session squared percent log returns).
///
/// # Safety
/// `prices` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_realized_variance(prices: *const f64, n: usize, out: *mut f64) -> VolmixStatus {
    guard(|| {
        let p = slice(prices, n, "prices")?;
        *out_ref(out, "out")? = realized_vol::realized_variance(p)?;
        Ok(())
    })
}

/// Scale parameter `mean(R^2) / mean(RV)`.
///
/// # Safety
/// `returns` and `rv` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_scale_parameter(
    returns: *const f64,
    rv: *const f64,
    n: usize,
    out: *mut f64,
) -> VolmixStatus {
    guard(|| {
        let r = slice(returns, n, "returns")?;
        let v = slice(rv, n, "rv")?;
        *out_ref(out, "out")? = realized_vol::scale_parameter(r, v)?;
        Ok(())
    })
}

/// All loss measures of `forecast` against `realized`.
///
/// # Safety
/// `forecast` and `realized` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_evaluate(
    forecast: *const f64,
    realized: *const f64,
    n: usize,
    out: *mut VolmixLosses,
) -> VolmixStatus {
    guard(|| {
        let h = slice(forecast, n, "forecast")?;
        let rv = slice(realized, n, "realized")?;
        let row = evaluation::evaluate("ffi", "-", h, rv)?;
        *out_ref(out, "out")? = VolmixLosses {
            n: row.n,
            mse: row.mse,
            hmse: row.hmse,
            mae: row.mae,
            mape: row.mape,
            qlike: row.qlike,
            r2log: row.r2log,
        };
        Ok(())
    })
}

unsafe fn midas_data(
    returns: *const f64,
    month_of_day: *const usize,
    n_days: usize,
    covariates: *const f64,
    n_covariates: usize,
    n_months: usize,
) -> Result<MidasData, Failure> {
    let r = slice(returns, n_days, "returns")?.to_vec();
    let t = slice(month_of_day, n_days, "month_of_day")?.to_vec();
    let x = slice(covariates, n_covariates * n_months, "covariates")?;
    let cov = x.chunks(n_months.max(1)).map(<[f64]>::to_vec).collect();
    Ok(MidasData::new(r, t, cov)?)
}

/// Fits GARCH-MIDAS with `n_covariates` exogenous monthly covariates and log link.
///
/// `month_of_day[i]` is the 0-based month of day `i`; `covariates` is
/// `n_covariates x n_months`, one row per covariate.
///
/// # Safety
/// Input pointers must cover the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_fit(
    returns: *const f64,
    month_of_day: *const usize,
    n_days: usize,
    covariates: *const f64,
    n_covariates: usize,
    n_months: usize,
    lags: usize,
    seed: u64,
    out: *mut *mut VolmixMidasFit,
) -> VolmixStatus {
    guard(|| {
        let data = midas_data(returns, month_of_day, n_days, covariates, n_covariates, n_months)?;
        let spec = MidasSpec::exogenous(lags, n_covariates);
        let opts = FitOptions {
            seed,
            ..Default::default()
        };
        let fit = garch_midas::fit(&spec, &data, None, &opts)?;
        give(
            out,
            VolmixMidasFit {
                doc: fit.document(),
                params: fit.params,
            },
        )
    })
}

/// Loads a fit saved by the CLI or by [`volmix_midas_save`].
///
/// # Safety
/// `file` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_load(file: *const c_char, out: *mut *mut VolmixMidasFit) -> VolmixStatus {
    guard(|| {
        let doc = FitDocument::load(path(file)?)?;
        let params = doc.params()?;
        give(out, VolmixMidasFit { doc, params })
    })
}

/// # Safety
/// `fit` must be a live handle; `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_save(fit: *const VolmixMidasFit, file: *const c_char) -> VolmixStatus {
    guard(|| Ok(handle(fit)?.doc.save(path(file)?)?))
}

/// # Safety
/// `fit` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_summary(fit: *const VolmixMidasFit, out: *mut VolmixMidasSummary) -> VolmixStatus {
    guard(|| {
        let f = handle(fit)?;
        *out_ref(out, "out")? = VolmixMidasSummary {
            mu: f.params.mu,
            alpha: f.params.alpha,
            beta: f.params.beta,
            m: f.params.m,
            log_likelihood: f.doc.log_likelihood,
            n_obs: f.doc.n_obs,
            lags: f.doc.spec.lags,
            covariates: f.params.theta.len(),
            converged: f.doc.convergence.converged,
        };
        Ok(())
    })
}

/// Slope and beta-weight shapes of covariate `j` (0-based).
///
/// # Safety
/// `fit` must be a live handle; the three outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_covariate(
    fit: *const VolmixMidasFit,
    j: usize,
    theta: *mut f64,
    omega1: *mut f64,
    omega2: *mut f64,
) -> VolmixStatus {
    guard(|| {
        let p = &handle(fit)?.params;
        if j >= p.theta.len() {
            return Err(Failure::Input(format!("covariate {j} of {}", p.theta.len())));
        }
        *out_ref(theta, "theta")? = p.theta[j];
        *out_ref(omega1, "omega1")? = p.omega1[j];
        *out_ref(omega2, "omega2")? = p.omega2[j];
        Ok(())
    })
}

/// Conditional variance `h` of every modeled day of the given data.
///
/// Writes `*written` values to `out_h`, the first belonging to day `*first_day`.
///
/// # Safety
/// Input pointers must cover the stated lengths; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_filter(
    fit: *const VolmixMidasFit,
    returns: *const f64,
    month_of_day: *const usize,
    n_days: usize,
    covariates: *const f64,
    n_covariates: usize,
    n_months: usize,
    out_h: *mut f64,
    out_len: usize,
    written: *mut usize,
    first_day: *mut usize,
) -> VolmixStatus {
    guard(|| {
        let f = handle(fit)?;
        let data = midas_data(returns, month_of_day, n_days, covariates, n_covariates, n_months)?;
        let filtered = garch_midas::filter(&f.doc.spec, &f.params, &data)?;
        let n = filtered.h.len();
        out_slice(out_h, out_len, n, "out_h")?[..n].copy_from_slice(&filtered.h);
        *out_ref(written, "written")? = n;
        *out_ref(first_day, "first_day")? = filtered.first_day;
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn volmix_midas_free(fit: *mut VolmixMidasFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Fits PCA on a `rows x cols` matrix, keeping `retain` components.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_pca_fit(
    data: *const f64,
    rows: usize,
    cols: usize,
    retain: usize,
    out: *mut *mut VolmixPca,
) -> VolmixStatus {
    guard(|| {
        let x = matrix(data, rows, cols, "data")?;
        let model = features::fit_pca(&x, retain)?;
        give(out, VolmixPca { model })
    })
}

/// Loads a `pca_<group>.json` written by the CLI.
///
/// # Safety
/// `file` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_pca_load(file: *const c_char, out: *mut *mut VolmixPca) -> VolmixStatus {
    guard(|| {
        let model = PcaModel::load(path(file)?)?;
        give(out, VolmixPca { model })
    })
}

/// Number of retained components.
///
/// # Safety
/// `pca` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn volmix_pca_components(pca: *const VolmixPca) -> usize {
    pca.as_ref().map_or(0, |p| p.model.n_components())
}

/// Variance share of each retained component.
///
/// # Safety
/// `pca` must be a live handle; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn volmix_pca_contributions(pca: *const VolmixPca, out: *mut f64, out_len: usize) -> VolmixStatus {
    guard(|| {
        let c = &handle(pca)?.model.contributions;
        out_slice(out, out_len, c.len(), "out")?[..c.len()].copy_from_slice(c);
        Ok(())
    })
}

/// Component scores of a `rows x cols` matrix, written row-major as `rows x components`.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn volmix_pca_transform(
    pca: *const VolmixPca,
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> VolmixStatus {
    guard(|| {
        let model = &handle(pca)?.model;
        let scores = features::transform(model, &matrix(data, rows, cols, "data")?)?;
        let s = scores.as_slice();
        out_slice(out, out_len, s.len(), "out")?[..s.len()].copy_from_slice(s);
        Ok(())
    })
}

/// # Safety
/// `pca` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn volmix_pca_free(pca: *mut VolmixPca) {
    if !pca.is_null() {
        drop(Box::from_raw(pca));
    }
}

/// Loads a `weights.json` written by the CLI.
///
/// # Safety
/// `file` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_transformer_load(file: *const c_char, out: *mut *mut VolmixTransformer) -> VolmixStatus {
    guard(|| {
        let model = TransformerModel::load(path(file)?)?;
        give(out, VolmixTransformer { model })
    })
}

/// Number of input features per day.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn volmix_transformer_features(model: *const VolmixTransformer) -> usize {
    model.as_ref().map_or(0, |m| m.model.features.len())
}

/// Number of days per input window the model was trained with.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn volmix_transformer_window(model: *const VolmixTransformer) -> usize {
    model.as_ref().map_or(0, |m| m.model.train.window)
}

/// Next-day forecast from one raw `rows x cols` window, oldest day first.
///
/// # Safety
/// `window` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn volmix_transformer_predict(
    model: *const VolmixTransformer,
    window: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> VolmixStatus {
    guard(|| {
        let m = &handle(model)?.model;
        let x = matrix(window, rows, cols, "window")?;
        *out_ref(out, "out")? = m.predict_window(&x)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn volmix_transformer_free(model: *mut VolmixTransformer) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
