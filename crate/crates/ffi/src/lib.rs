//! C ABI over the `sacfem` study runner.
//!
//! Configs and study results are opaque handles. Every fallible call returns a
//! [`SacfemStatus`]; on failure the message is available from
//! [`sacfem_last_error`] on the same thread. Strings returned through `out`
//! parameters are owned by the caller and released with [`sacfem_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sacfem::config::{parse_config, StudyConfig};
use sacfem::experiments::{run_study, RunOptions, StudyOutput};
use sacfem::selftest::run_selftest;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SacfemStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Study = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Parsed and validated study configuration.
pub struct SacfemConfig {
    inner: StudyConfig,
}

/// Reports produced by one study run.
pub struct SacfemStudy {
    inner: StudyOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (SacfemStatus, String)>) -> SacfemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SacfemStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside sacfem");
            SacfemStatus::Panic
        }
    }
}

fn null(what: &str) -> (SacfemStatus, String) {
    (SacfemStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SacfemStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (SacfemStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior nul removed").into_raw()
}

unsafe fn study_ref<'a>(study: *const SacfemStudy) -> Result<&'a StudyOutput, (SacfemStatus, String)> {
    study.as_ref().map(|s| &s.inner).ok_or_else(|| null("study"))
}

fn report_at(out: &StudyOutput, index: usize) -> Result<&sacfem::experiments::RateReport, (SacfemStatus, String)> {
    let reports = out.reports();
    let n = reports.len();
    reports.get(index).copied().ok_or((SacfemStatus::OutOfRange, format!("report index {index} out of range 0..{n}")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sacfem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sacfem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sacfem_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a TOML study config.
///
/// # Safety
/// `text` must be a nul-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_config_parse(text: *const c_char, out: *mut *mut SacfemConfig) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(text, "text")?;
        let cfg = parse_config(text).map_err(|e| (SacfemStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(SacfemConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from [`sacfem_config_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sacfem_config_free(cfg: *mut SacfemConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn sacfem_config_set_seed(cfg: *mut SacfemConfig, seed: u64) -> SacfemStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        cfg.inner.seed = seed;
        Ok(())
    })
}

/// Short hex hash identifying the config.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_config_hash(cfg: *const SacfemConfig, out: *mut *mut c_char) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        *out = to_c(cfg.inner.hash());
        Ok(())
    })
}

/// Run the configured study on `workers` threads (0: one per core).
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_study_run(
    cfg: *const SacfemConfig,
    workers: u32,
    out: *mut *mut SacfemStudy,
) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        let res = run_study(&cfg.inner, &RunOptions { workers: workers as usize })
            .map_err(|e| (SacfemStatus::Study, e.to_string()))?;
        *out = Box::into_raw(Box::new(SacfemStudy { inner: res }));
        Ok(())
    })
}

/// # Safety
/// `study` must be null or a handle from [`sacfem_study_run`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sacfem_study_free(study: *mut SacfemStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}

/// Number of rate reports in the study.
///
/// # Safety
/// `study` must be a live study handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_study_report_count(study: *const SacfemStudy, out: *mut usize) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = study_ref(study)?.reports().len();
        Ok(())
    })
}

/// Fitted slope of report `index`; `NaN` when no fit was possible.
///
/// # Safety
/// `study` must be a live study handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_study_slope(study: *const SacfemStudy, index: usize, out: *mut f64) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = report_at(study_ref(study)?, index)?.slope().unwrap_or(f64::NAN);
        Ok(())
    })
}

/// CSV text of report `index`.
///
/// # Safety
/// `study` must be a live study handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_study_csv(study: *const SacfemStudy, index: usize, out: *mut *mut c_char) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = to_c(report_at(study_ref(study)?, index)?.to_csv());
        Ok(())
    })
}

/// JSON summary of report `index`, stamped with the caller's runtime.
///
/// # Safety
/// `study` must be a live study handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_study_json(
    study: *const SacfemStudy,
    index: usize,
    runtime_seconds: f64,
    out: *mut *mut c_char,
) -> SacfemStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = report_at(study_ref(study)?, index)?.summary_json(runtime_seconds);
        *out = to_c(v.to_string());
        Ok(())
    })
}

/// Run the built-in checks; `failed` receives the number of failures.
///
/// # Safety
/// `failed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sacfem_selftest(failed: *mut u32) -> SacfemStatus {
    guard(|| {
        if failed.is_null() {
            return Err(null("failed"));
        }
        *failed = run_selftest().iter().filter(|o| !o.passed).count() as u32;
        Ok(())
    })
}
