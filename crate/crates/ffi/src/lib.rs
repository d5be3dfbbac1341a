//! C ABI over the renormtrace library.
//!
//! Conventions:
//! * Every fallible function returns an `RtStatus`; results go through out
//!   pointers, which are written only on `RT_STATUS_OK`.
//! * Handles are opaque and owned by the caller once returned; release them
//!   with the matching `*_free` function. Passing NULL to a free function is
//!   a no-op.
//! * On failure, `rt_last_error` returns a message for the calling thread.
//! * Panics never cross the boundary; they surface as `RT_STATUS_PANIC`.

use renormtrace::cli::report::Row;
use renormtrace::cli::scenario::Scenario;
use renormtrace::cli::{run_scenario, Overrides};
use renormtrace::specops::{OperatorExpr, SpectralOperator, Weight, DEFAULT_SYMBOL_DEPTH};
use renormtrace::traces::{heat_trace, weighted_trace, wodzicki_residue_symbol, TraceOptions};
use renormtrace::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Unsupported = 4,
    Numerical = 5,
    Hypothesis = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtComplex {
    pub re: f64,
    pub im: f64,
}

/// Positive self-adjoint weight at a fixed cutoff.
pub struct RtWeight(Weight);

/// Quantized operator at a fixed cutoff.
pub struct RtOperator(SpectralOperator);

/// Result of a scenario run.
pub struct RtReport {
    json: CString,
    pass: bool,
    rows: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (RtStatus, String);

fn status_of(e: &Error) -> RtStatus {
    match e {
        Error::InvalidInput(_) | Error::CutoffMismatch { .. } => RtStatus::InvalidInput,
        Error::Parse(_) => RtStatus::Parse,
        Error::UnsupportedSymbol(_) => RtStatus::Unsupported,
        Error::Hypothesis(_) => RtStatus::Hypothesis,
        _ => RtStatus::Numerical,
    }
}

fn lib(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|s| *s.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(format!("internal panic: {}", msg.unwrap_or_default()));
            RtStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be NULL or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((RtStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (RtStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err((RtStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn literal(json: &str) -> Result<OperatorExpr, Failure> {
    serde_json::from_str(json).map_err(|e| (RtStatus::Parse, format!("operator literal: {e}")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rt_last_error() -> *const c_char {
    LAST_ERROR.with(|s| s.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Builds a weight from a JSON operator literal at cutoff N (modes −N..N).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_weight_from_json(json: *const c_char, cutoff: usize, out: *mut *mut RtWeight) -> RtStatus {
    guard(|| {
        nonnull(out, "out")?;
        let e = literal(text(json, "json")?)?;
        let w = Weight::from_expr(&e, cutoff).map_err(lib)?;
        *out = Box::into_raw(Box::new(RtWeight(w)));
        Ok(())
    })
}

/// Smallest cutoff whose heat tail at `eps`, for entries growing like
/// |n|^growth, is below `tolerance`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_cutoff_for_tail(json: *const c_char, eps: f64, growth: f64, tolerance: f64, out: *mut usize) -> RtStatus {
    guard(|| {
        nonnull(out, "out")?;
        let e = literal(text(json, "json")?)?;
        *out = Weight::cutoff_for_tail(&e, eps, growth, tolerance).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `w` must be NULL or a handle from `rt_weight_from_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_weight_free(w: *mut RtWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Quantizes a JSON operator literal at cutoff N.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_operator_from_json(json: *const c_char, cutoff: usize, out: *mut *mut RtOperator) -> RtStatus {
    guard(|| {
        nonnull(out, "out")?;
        let e = literal(text(json, "json")?)?;
        let a = e.quantize(cutoff).map_err(lib)?;
        *out = Box::into_raw(Box::new(RtOperator(a)));
        Ok(())
    })
}

/// # Safety
/// `a` must be NULL or a handle from `rt_operator_from_json` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_operator_free(a: *mut RtOperator) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// tr(A e^{−εQ}) at the shared cutoff.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rt_heat_trace(a: *const RtOperator, q: *const RtWeight, eps: f64, out: *mut RtComplex) -> RtStatus {
    guard(|| {
        nonnull(a, "operator")?;
        nonnull(q, "weight")?;
        nonnull(out, "out")?;
        let v = heat_trace(&(*a).0, &(*q).0, eps).map_err(lib)?.value;
        *out = RtComplex { re: v.re, im: v.im };
        Ok(())
    })
}

/// μ-renormalized weighted trace with default fitting options.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rt_weighted_trace(a: *const RtOperator, q: *const RtWeight, mu: f64, out: *mut RtComplex) -> RtStatus {
    guard(|| {
        nonnull(a, "operator")?;
        nonnull(q, "weight")?;
        nonnull(out, "out")?;
        let v = weighted_trace(&(*a).0, &(*q).0, mu, &TraceOptions::default()).map_err(lib)?.value;
        *out = RtComplex { re: v.re, im: v.im };
        Ok(())
    })
}

/// Noncommutative residue of a symbol-representable literal.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_residue(json: *const c_char, out: *mut RtComplex) -> RtStatus {
    guard(|| {
        nonnull(out, "out")?;
        let e = literal(text(json, "json")?)?;
        let sym = e.symbol(DEFAULT_SYMBOL_DEPTH).map_err(lib)?;
        let v = wodzicki_residue_symbol(&sym).map_err(lib)?;
        *out = RtComplex { re: v.re, im: v.im };
        Ok(())
    })
}

/// Runs a scenario given as JSON text. Failing checks still yield a report
/// (inspect `rt_report_passed`); only parse and validation errors fail.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_scenario_run(scenario_json: *const c_char, out: *mut *mut RtReport) -> RtStatus {
    guard(|| {
        nonnull(out, "out")?;
        let sc = Scenario::parse(text(scenario_json, "scenario_json")?).map_err(lib)?;
        let rows: Vec<Row> = run_scenario(&sc, &Overrides::default());
        let json = renormtrace::cli::report::to_json(&sc.name, &rows);
        let pass = rows.iter().all(|r| r.pass);
        let json = CString::new(json).map_err(|e| (RtStatus::Numerical, e.to_string()))?;
        *out = Box::into_raw(Box::new(RtReport { json, pass, rows: rows.len() }));
        Ok(())
    })
}

/// True iff every row of the report passed; false for NULL.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rt_report_passed(r: *const RtReport) -> bool {
    !r.is_null() && (*r).pass
}

/// Number of rows in the report; 0 for NULL.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rt_report_rows(r: *const RtReport) -> usize {
    if r.is_null() {
        0
    } else {
        (*r).rows
    }
}

/// JSON text of the report, owned by the handle.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn rt_report_json(r: *const RtReport) -> *const c_char {
    if r.is_null() {
        std::ptr::null()
    } else {
        (*r).json.as_ptr()
    }
}

/// # Safety
/// `r` must be NULL or a report handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_report_free(r: *mut RtReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
