//! C ABI over `senslab`.
//!
//! Every fallible function returns a [`SenslabStatus`] and writes results
//! through out-pointers. On failure the message is kept per thread and read
//! with [`senslab_last_error`]. Handles are opaque and freed by their
//! matching `*_free` function; strings returned to C are freed with
//! [`senslab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use senslab::adversaries::median_worst_case;
use senslab::analysis::{chi2_localshift_bound, tv_gaussian_shift};
use senslab::bernoulli::bernoulli_expected_sensitivity;
use senslab::estimators::{estimator_by_name, RegistryOptions};
use senslab::harness::{to_json, verify_suite, AdversarySpec, EsConfig, Model};
use senslab::{compute_k, CorruptionBudget, Dataset, SensError, SharedEstimator, SensitivityReport};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SenslabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidEta = 4,
    ShapeMismatch = 5,
    NonFinite = 6,
    EnumerationGuard = 7,
    Overflow = 8,
    UnboundedSensitivity = 9,
    UnknownEstimator = 10,
    UnknownAdversary = 11,
    Unsupported = 12,
    InsufficientPoints = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

impl From<&SensError> for SenslabStatus {
    fn from(e: &SensError) -> Self {
        match e {
            SensError::InvalidEta(_) => Self::InvalidEta,
            SensError::InvalidArgument(_) => Self::InvalidArgument,
            SensError::ShapeMismatch { .. } => Self::ShapeMismatch,
            SensError::NonFinite => Self::NonFinite,
            SensError::EnumerationGuard(_) => Self::EnumerationGuard,
            SensError::Overflow(_) => Self::Overflow,
            SensError::UnboundedSensitivity { .. } => Self::UnboundedSensitivity,
            SensError::UnknownEstimator(_) => Self::UnknownEstimator,
            SensError::UnknownAdversary(_) => Self::UnknownAdversary,
            SensError::Unsupported { .. } => Self::Unsupported,
            SensError::InsufficientPoints { .. } => Self::InsufficientPoints,
        }
    }
}

/// Opaque dataset handle.
pub struct SenslabDataset(Dataset);

/// Opaque estimator handle.
pub struct SenslabEstimator(SharedEstimator);

/// Opaque sensitivity report handle.
pub struct SenslabReport(SensitivityReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SenslabStatus, String);

impl From<SensError> for Failure {
    fn from(e: SensError) -> Self {
        Failure(SenslabStatus::from(&e), e.to_string())
    }
}

fn null() -> Failure {
    Failure(SenslabStatus::NullPointer, "null pointer argument".into())
}

/// Runs `f`, mapping errors and panics to a status and the last-error slot.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SenslabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SenslabStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SenslabStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(null)
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SenslabStatus::InvalidUtf8, "string argument is not UTF-8".into()))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(SenslabStatus::InvalidArgument, "output contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn senslab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn senslab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of corrupted rows `floor(eta * n)`.
///
/// # Safety
/// `k_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn senslab_compute_k(eta: f64, n: usize, k_out: *mut usize) -> SenslabStatus {
    guard(|| {
        *out(k_out)? = compute_k(eta, n)?;
        Ok(())
    })
}

/// Total variation between `N(0, 1)` and `N(eta, 1)`.
#[no_mangle]
pub extern "C" fn senslab_tv_gaussian_shift(eta: f64) -> f64 {
    tv_gaussian_shift(eta)
}

/// Chi-square bound of the local-shift mixture.
///
/// # Safety
/// `value_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn senslab_chi2_localshift_bound(k: usize, n: usize, delta: f64, value_out: *mut f64) -> SenslabStatus {
    guard(|| {
        *out(value_out)? = chi2_localshift_bound(k, n, delta)?;
        Ok(())
    })
}

/// Builds a dataset from `n * d` row-major values.
///
/// # Safety
/// `values` must point to `n * d` doubles; `dataset_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_dataset_new(
    n: usize,
    d: usize,
    values: *const f64,
    dataset_out: *mut *mut SenslabDataset,
) -> SenslabStatus {
    guard(|| {
        let slot = out(dataset_out)?;
        if values.is_null() {
            return Err(null());
        }
        let len = n.checked_mul(d).ok_or_else(|| Failure(SenslabStatus::InvalidArgument, "n * d overflows".into()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        *slot = Box::into_raw(Box::new(SenslabDataset(Dataset::new(n, d, data)?)));
        Ok(())
    })
}

/// Frees a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from [`senslab_dataset_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn senslab_dataset_free(dataset: *mut SenslabDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Resolves a registry estimator (`mean`, `median`, `clipped-mean`, ...).
/// Clipped estimators use the interval `[clip_lo, clip_hi]`.
///
/// # Safety
/// `name` must be a nul-terminated string; `estimator_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_estimator_new(
    name: *const c_char,
    clip_lo: f64,
    clip_hi: f64,
    estimator_out: *mut *mut SenslabEstimator,
) -> SenslabStatus {
    guard(|| {
        let slot = out(estimator_out)?;
        let opts = RegistryOptions {
            clip: senslab::estimators::ClipInterval::new(clip_lo, clip_hi)?,
            ..RegistryOptions::default()
        };
        let f = estimator_by_name(text(name)?, &opts)?;
        *slot = Box::into_raw(Box::new(SenslabEstimator(f)));
        Ok(())
    })
}

/// Frees an estimator. Null is ignored.
///
/// # Safety
/// `estimator` must come from [`senslab_estimator_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn senslab_estimator_free(estimator: *mut SenslabEstimator) {
    if !estimator.is_null() {
        drop(Box::from_raw(estimator));
    }
}

/// Evaluates an estimator. Writes up to `capacity` values to `values_out`
/// and the output dimension to `len_out`; fails with `BufferTooSmall` if
/// `capacity` is short.
///
/// # Safety
/// Handles must be live; `values_out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn senslab_estimator_evaluate(
    estimator: *const SenslabEstimator,
    dataset: *const SenslabDataset,
    values_out: *mut f64,
    capacity: usize,
    len_out: *mut usize,
) -> SenslabStatus {
    guard(|| {
        let f = estimator.as_ref().ok_or_else(null)?;
        let x = dataset.as_ref().ok_or_else(null)?;
        let len = out(len_out)?;
        let v = f.0.evaluate(&x.0);
        *len = v.len();
        if capacity < v.len() {
            return Err(Failure(SenslabStatus::BufferTooSmall, format!("need {} values, capacity {capacity}", v.len())));
        }
        if values_out.is_null() {
            return Err(null());
        }
        ptr::copy_nonoverlapping(v.as_ptr(), values_out, v.len());
        Ok(())
    })
}

/// Exact worst-case median displacement for a scalar dataset of odd size.
///
/// # Safety
/// `dataset` must be live; `value_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_median_worst_case(dataset: *const SenslabDataset, k: usize, value_out: *mut f64) -> SenslabStatus {
    guard(|| {
        let x = dataset.as_ref().ok_or_else(null)?;
        let slot = out(value_out)?;
        let outcome = median_worst_case(&x.0, &CorruptionBudget::from_k(x.0.n(), k)?)?;
        *slot = outcome.certificate.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Exact expected sensitivity on `Bern(p)^n` data under `k` corruptions.
///
/// # Safety
/// `estimator` must be live; `value_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_bernoulli_expected_sensitivity(
    estimator: *const SenslabEstimator,
    n: usize,
    p: f64,
    k: usize,
    value_out: *mut f64,
) -> SenslabStatus {
    guard(|| {
        let f = estimator.as_ref().ok_or_else(null)?;
        let slot = out(value_out)?;
        *slot = bernoulli_expected_sensitivity(f.0.as_ref(), n, p, &CorruptionBudget::from_k(n, k)?)?;
        Ok(())
    })
}

/// Monte Carlo expected sensitivity of a registry estimator on `N(0, I_d)`
/// data. `delta` is used only by `local-shift`; pass NaN otherwise.
///
/// # Safety
/// String arguments must be nul-terminated; `report_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_estimate_es(
    estimator: *const c_char,
    adversary: *const c_char,
    delta: f64,
    n: usize,
    d: usize,
    eta: f64,
    q: u32,
    trials: u64,
    seed: u64,
    report_out: *mut *mut SenslabReport,
) -> SenslabStatus {
    guard(|| {
        let slot = out(report_out)?;
        let delta = (!delta.is_nan()).then_some(delta);
        let adversary = AdversarySpec::by_name(text(adversary)?, delta)?;
        let mut cfg = EsConfig::new(text(estimator)?, adversary, Model::gaussian(vec![0.0; d])?, eta, n);
        cfg.q = q;
        cfg.trials = trials;
        cfg.seed = seed;
        *slot = Box::into_raw(Box::new(SenslabReport(cfg.run()?)));
        Ok(())
    })
}

/// Point estimate and confidence interval of a report.
///
/// # Safety
/// `report` must be live; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_report_summary(
    report: *const SenslabReport,
    es_out: *mut f64,
    ci_low_out: *mut f64,
    ci_high_out: *mut f64,
) -> SenslabStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(null)?.0;
        *out(es_out)? = r.es_estimate;
        *out(ci_low_out)? = r.ci_low;
        *out(ci_high_out)? = r.ci_high;
        Ok(())
    })
}

/// The report as `senslab/v1` JSON; free with [`senslab_string_free`].
///
/// # Safety
/// `report` must be live; `json_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn senslab_report_json(report: *const SenslabReport, json_out: *mut *mut c_char) -> SenslabStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(null)?;
        let slot = out(json_out)?;
        *slot = to_c_string(to_json(&r.0)?)?;
        Ok(())
    })
}

/// Frees a report. Null is ignored.
///
/// # Safety
/// `report` must come from [`senslab_estimate_es`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn senslab_report_free(report: *mut SenslabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs the inequality checker grid. Writes the failure count and, if
/// `json_out` is not null, the full JSON report.
///
/// # Safety
/// `failures_out` must be valid; `json_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn senslab_verify(
    trials_scale: u64,
    seed: u64,
    failures_out: *mut usize,
    json_out: *mut *mut c_char,
) -> SenslabStatus {
    guard(|| {
        let failures = out(failures_out)?;
        let report = verify_suite(trials_scale, seed)?;
        *failures = report.failures;
        if let Some(slot) = json_out.as_mut() {
            *slot = to_c_string(to_json(&report)?)?;
        }
        Ok(())
    })
}
