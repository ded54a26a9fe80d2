//! C ABI for the simulator. Scenarios and reports are opaque handles owned
//! by the caller and released with their `*_free` function. Every entry
//! point returns an `McfStatus`; on failure `mcf_last_error` describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mcfsim::scenario::Scenario;
use mcfsim::telemetry::{check_assertion, compare, metric_value, MetricsReport, TelemetryError};
use mcfsim::world::{run_scenario, RunError};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    UnknownName = 4,
    RuntimeFailure = 5,
    UnknownMetric = 6,
    MetricAbsent = 7,
    ScenarioMismatch = 8,
    InternalPanic = 9,
}

/// A resolved, validated scenario.
pub struct McfScenario {
    inner: Scenario,
}

/// The canonical report of one run.
pub struct McfReport {
    inner: MetricsReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    // interior NULs cannot cross the boundary
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("no interior NUL"));
}

fn fail(status: McfStatus, msg: impl Into<String>) -> McfStatus {
    set_error(msg);
    status
}

/// Run `body`, turning panics into `InternalPanic`.
fn guard(body: impl FnOnce() -> McfStatus) -> McfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(McfStatus::InternalPanic, "internal error: the simulator panicked"),
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, McfStatus> {
    if p.is_null() {
        return Err(fail(McfStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(McfStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn metric_status(e: TelemetryError) -> McfStatus {
    match e {
        TelemetryError::UnknownMetric(_) | TelemetryError::BadAssertion(_) => fail(McfStatus::UnknownMetric, e.to_string()),
        TelemetryError::ScenarioMismatch(..) => fail(McfStatus::ScenarioMismatch, e.to_string()),
        _ => fail(McfStatus::RuntimeFailure, e.to_string()),
    }
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mcf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a scenario document.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_from_toml(toml: *const c_char, out: *mut *mut McfScenario) -> McfStatus {
    guard(|| {
        if out.is_null() {
            return fail(McfStatus::NullArgument, "null out pointer");
        }
        *out = ptr::null_mut();
        let text = match text(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::from_toml(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(McfScenario { inner }));
                McfStatus::Ok
            }
            Err(diags) => {
                let lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
                fail(McfStatus::InvalidScenario, lines.join("\n"))
            }
        }
    })
}

/// Look up a built-in scenario by name.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_builtin(name: *const c_char, out: *mut *mut McfScenario) -> McfStatus {
    guard(|| {
        if out.is_null() {
            return fail(McfStatus::NullArgument, "null out pointer");
        }
        *out = ptr::null_mut();
        let name = match text(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match mcfsim::builtins::scenario(name) {
            Some(inner) => {
                *out = Box::into_raw(Box::new(McfScenario { inner }));
                McfStatus::Ok
            }
            None => fail(McfStatus::UnknownName, format!("no built-in scenario named `{name}`")),
        }
    })
}

/// Override the root seed.
///
/// # Safety
/// `scenario` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_set_seed(scenario: *mut McfScenario, seed: u64) -> McfStatus {
    guard(|| match scenario.as_mut() {
        Some(s) => {
            s.inner.run.seed = seed;
            McfStatus::Ok
        }
        None => fail(McfStatus::NullArgument, "null scenario"),
    })
}

/// Release a scenario. Null is ignored.
///
/// # Safety
/// `scenario` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_free(scenario: *mut McfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulate a scenario to completion. The scenario is left untouched.
///
/// # Safety
/// `scenario` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcf_run(scenario: *const McfScenario, out: *mut *mut McfReport) -> McfStatus {
    guard(|| {
        if out.is_null() {
            return fail(McfStatus::NullArgument, "null out pointer");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else { return fail(McfStatus::NullArgument, "null scenario") };
        match run_scenario(s.inner.clone()) {
            Ok(r) => {
                let json = CString::new(r.report.to_canonical_json()).expect("JSON has no NUL");
                *out = Box::into_raw(Box::new(McfReport { inner: r.report, json }));
                McfStatus::Ok
            }
            Err(RunError::Invalid(m)) => fail(McfStatus::InvalidScenario, m),
            Err(RunError::Telemetry(e)) => fail(McfStatus::RuntimeFailure, e.to_string()),
        }
    })
}

/// Canonical JSON of a report, owned by the report.
///
/// # Safety
/// `report` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcf_report_json(report: *const McfReport) -> *const c_char {
    match report.as_ref() {
        Some(r) => r.json.as_ptr(),
        None => {
            set_error("null report");
            ptr::null()
        }
    }
}

/// Read one headline metric, e.g. `latency`, `throughput`, `cpu` or `recovery`.
///
/// # Safety
/// `report` is a live handle; `metric` a NUL-terminated string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_report_metric(report: *const McfReport, metric: *const c_char, out: *mut f64) -> McfStatus {
    guard(|| {
        let (Some(r), false) = (report.as_ref(), out.is_null()) else {
            return fail(McfStatus::NullArgument, "null report or out pointer");
        };
        let metric = match text(metric) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match metric_value(&r.inner, metric) {
            Ok(Some(v)) => {
                *out = v;
                McfStatus::Ok
            }
            Ok(None) => fail(McfStatus::MetricAbsent, format!("`{metric}` is not present in this report")),
            Err(e) => metric_status(e),
        }
    })
}

/// Check an ordering assertion such as `latency:A<B` between two reports of
/// the same family. `holds` receives 1 or 0.
///
/// # Safety
/// `a` and `b` are live handles; `assertion` a NUL-terminated string; `holds` valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_compare(
    a: *const McfReport,
    b: *const McfReport,
    assertion: *const c_char,
    holds: *mut i32,
) -> McfStatus {
    guard(|| {
        let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), holds.is_null()) else {
            return fail(McfStatus::NullArgument, "null report or out pointer");
        };
        let assertion = match text(assertion) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cmp = match compare(&a.inner, &b.inner) {
            Ok(c) => c,
            Err(e) => return metric_status(e),
        };
        match check_assertion(&cmp, assertion) {
            Ok(ok) => {
                *holds = i32::from(ok);
                McfStatus::Ok
            }
            Err(e) => metric_status(e),
        }
    })
}

/// Release a report. Null is ignored.
///
/// # Safety
/// `report` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcf_report_free(report: *mut McfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
