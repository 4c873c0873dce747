//! C ABI for the DLO placement toolkit.
//!
//! Conventions:
//! - An opaque `DloToolkit` handle carries the configuration and the
//!   last error message.
//! - Every fallible call returns a `DloStatus`; on failure the message
//!   is retrievable with `dlo_last_error` until the next call on the
//!   same handle.
//! - Structured inputs and outputs are UTF-8 JSON / CSV strings in the
//!   same formats as the `dloplace` CLI. Returned strings must be
//!   released with `dlo_string_free`.
//!
//! The installable header lives at `include/dlo_placement.h`. It is
//! maintained by hand (kept in lock-step by a consistency test) because
//! the build environment provides no C binding generator.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dlo_placement::characterize::{fit_elastica, ObservedShape};
use dlo_placement::config::ToolConfig;
use dlo_placement::controller::run_simulation;
use dlo_placement::elastica::{eval_shape, ElasticaParams, Pose};
use dlo_placement::elliptic::Modulus;
use dlo_placement::error::Error;
use dlo_placement::io::{points_from_csv, shape_to_csv, SimSummary};
use dlo_placement::planner::{plan_full, PlanPath};

/// Status codes of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DloStatus {
    /// Success.
    DloOk = 0,
    /// Invalid argument: null pointer, bad UTF-8, malformed input, or a
    /// validation failure.
    DloInvalidArgument = 1,
    /// Domain failure: planning, fitting, or simulation did not succeed.
    DloDomainFailure = 2,
    /// Internal panic; the handle is still usable.
    DloPanic = 3,
}

/// Opaque toolkit handle: configuration plus last error message.
pub struct DloToolkit {
    config: ToolConfig,
    last_error: CString,
}

fn status_for(err: &Error) -> DloStatus {
    match err {
        Error::PlanningFailed { .. }
        | Error::FitFailed(_)
        | Error::SimulationFailed(_)
        | Error::Degenerate(_) => DloStatus::DloDomainFailure,
        _ => DloStatus::DloInvalidArgument,
    }
}

fn set_error(tk: &mut DloToolkit, msg: &str) {
    tk.last_error = CString::new(msg.replace('\0', " ")).unwrap_or_default();
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, String> {
    if ptr.is_null() {
        return Err("null string argument".into());
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|e| format!("argument is not UTF-8: {e}"))
}

fn return_string(out: *mut *mut c_char, text: String) -> Result<(), String> {
    if out.is_null() {
        return Err("null output pointer".into());
    }
    let c = CString::new(text).map_err(|e| format!("output contains NUL: {e}"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Run `f`, routing errors and panics into the handle's status/message.
fn guarded<F>(tk: *mut DloToolkit, f: F) -> DloStatus
where
    F: FnOnce(&mut DloToolkit) -> Result<(), (DloStatus, String)>,
{
    let Some(tk) = (unsafe { tk.as_mut() }) else {
        return DloStatus::DloInvalidArgument;
    };
    match catch_unwind(AssertUnwindSafe(|| f(tk))) {
        Ok(Ok(())) => {
            tk.last_error = CString::default();
            DloStatus::DloOk
        }
        Ok(Err((status, msg))) => {
            set_error(tk, &msg);
            status
        }
        Err(_) => {
            set_error(tk, "internal panic");
            DloStatus::DloPanic
        }
    }
}

fn domain(err: Error) -> (DloStatus, String) {
    (status_for(&err), err.to_string())
}

fn invalid(msg: String) -> (DloStatus, String) {
    (DloStatus::DloInvalidArgument, msg)
}

/// Create a toolkit from a configuration JSON document (the `dloplace`
/// config schema). On success writes the handle to `out`.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dlo_toolkit_new(
    config_json: *const c_char,
    out: *mut *mut DloToolkit,
) -> DloStatus {
    if out.is_null() {
        return DloStatus::DloInvalidArgument;
    }
    let result = catch_unwind(|| -> Result<ToolConfig, (DloStatus, String)> {
        let text = unsafe { str_arg(config_json) }.map_err(invalid)?;
        ToolConfig::from_json(text).map_err(domain)
    });
    match result {
        Ok(Ok(config)) => {
            let tk = Box::new(DloToolkit { config, last_error: CString::default() });
            unsafe { *out = Box::into_raw(tk) };
            DloStatus::DloOk
        }
        Ok(Err((status, _))) => status,
        Err(_) => DloStatus::DloPanic,
    }
}

/// Release a toolkit handle. Null is a no-op.
///
/// # Safety
/// `tk` must be null or a handle from `dlo_toolkit_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dlo_toolkit_free(tk: *mut DloToolkit) {
    if !tk.is_null() {
        drop(unsafe { Box::from_raw(tk) });
    }
}

/// Last error message of the handle; empty string when the previous
/// call succeeded. Valid until the next call on the same handle.
///
/// # Safety
/// `tk` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dlo_last_error(tk: *const DloToolkit) -> *const c_char {
    match unsafe { tk.as_ref() } {
        Some(tk) => tk.last_error.as_ptr(),
        None => ptr::null(),
    }
}

/// Evaluate a free elastica shape and return it as shape CSV
/// (`# {json}` header plus `s,x,y,phi,kappa` rows).
///
/// # Safety
/// `tk` must be a live handle and `out_csv` a valid pointer; the
/// returned string must be freed with `dlo_string_free`.
#[no_mangle]
pub unsafe extern "C" fn dlo_eval_shape(
    tk: *mut DloToolkit,
    x: f64,
    y: f64,
    phi: f64,
    k: f64,
    s0: f64,
    ltilde: f64,
    samples: usize,
    out_csv: *mut *mut c_char,
) -> DloStatus {
    guarded(tk, |tk| {
        let params = ElasticaParams::new(Modulus::new(k).map_err(domain)?, s0, ltilde)
            .map_err(domain)?;
        let shape = eval_shape(Pose::planar(x, y, phi), &params, &tk.config.stiffness, samples)
            .map_err(domain)?;
        return_string(out_csv, shape_to_csv(&shape).map_err(domain)?).map_err(invalid)
    })
}

/// Plan a full three-stage placement from a start state JSON
/// (`{"base": {...}, "params": {...}}`); returns the plan JSON.
///
/// # Safety
/// As for `dlo_eval_shape`.
#[no_mangle]
pub unsafe extern "C" fn dlo_plan(
    tk: *mut DloToolkit,
    start_json: *const c_char,
    out_plan_json: *mut *mut c_char,
) -> DloStatus {
    guarded(tk, |tk| {
        let text = unsafe { str_arg(start_json) }.map_err(invalid)?;
        let start = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let cfg = &tk.config;
        let plan = plan_full(&start, &cfg.surface, cfg.direction, &cfg.grid, &cfg.stiffness)
            .map_err(domain)?;
        let json = serde_json::to_string_pretty(&plan).map_err(|e| invalid(e.to_string()))?;
        return_string(out_plan_json, json).map_err(invalid)
    })
}

/// Fit elastica parameters to an observed points CSV (JSON header line
/// with base pose and L); returns the candidate set JSON.
///
/// # Safety
/// As for `dlo_eval_shape`.
#[no_mangle]
pub unsafe extern "C" fn dlo_fit(
    tk: *mut DloToolkit,
    points_csv: *const c_char,
    starts: usize,
    out_candidates_json: *mut *mut c_char,
) -> DloStatus {
    guarded(tk, |tk| {
        let text = unsafe { str_arg(points_csv) }.map_err(invalid)?;
        let (points, base, length) = points_from_csv(text).map_err(domain)?;
        let obs = ObservedShape::new(points, base, length).map_err(domain)?;
        let set = fit_elastica(&obs, &tk.config.stiffness, starts).map_err(domain)?;
        let json = serde_json::to_string_pretty(&set).map_err(|e| invalid(e.to_string()))?;
        return_string(out_candidates_json, json).map_err(invalid)
    })
}

/// Run the closed-loop simulation over a plan JSON; returns the summary
/// JSON. A run that does not complete reports `DloDomainFailure`.
///
/// # Safety
/// As for `dlo_eval_shape`.
#[no_mangle]
pub unsafe extern "C" fn dlo_simulate(
    tk: *mut DloToolkit,
    plan_json: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> DloStatus {
    guarded(tk, |tk| {
        let text = unsafe { str_arg(plan_json) }.map_err(invalid)?;
        let plan: PlanPath = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        plan.validate().map_err(domain)?;
        let cfg = &tk.config;
        let res = run_simulation(&plan, &cfg.controller, &cfg.stiffness, &cfg.surface)
            .map_err(domain)?;
        let summary = SimSummary::from_result(&res);
        if !summary.success {
            return Err((
                DloStatus::DloDomainFailure,
                summary
                    .failure_reason
                    .unwrap_or_else(|| "simulation did not complete".into()),
            ));
        }
        let json =
            serde_json::to_string_pretty(&summary).map_err(|e| invalid(e.to_string()))?;
        return_string(out_summary_json, json).map_err(invalid)
    })
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dlo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn dlo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
