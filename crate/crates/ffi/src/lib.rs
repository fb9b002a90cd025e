//! C ABI for the spansim cluster simulator.
//!
//! Handles are opaque: a `SpansimScenario` wraps a loaded scenario plus any
//! seed/policy overrides, a `SpansimReport` wraps the metrics of a finished
//! run. Every fallible call returns a [`SpansimStatus`]; on failure a
//! thread-local message is readable through `spansim_last_error_message`
//! until the next call on the same thread. Strings returned through
//! `*mut c_char` out-params are owned by the caller and must be released
//! with `spansim_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double};
use std::path::Path;
use std::ptr;

use spansim::scenario::{parse_policy_overrides, PolicyOverrides, Scenario};
use spansim::{engine, MetricsReport};

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpansimStatus {
    SpansimOk = 0,
    SpansimNullArgument = 1,
    SpansimInvalidUtf8 = 2,
    SpansimIoError = 3,
    SpansimParseError = 4,
    SpansimInvalidScenario = 5,
    SpansimRuntimeError = 6,
}

/// Scalar counters readable from a report.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpansimCounter {
    SpansimCounterArrivals = 0,
    SpansimCounterCompleted = 1,
    SpansimCounterRunningAtHorizon = 2,
    SpansimCounterPendingAtHorizon = 3,
    SpansimCounterFailedAtHorizon = 4,
    SpansimCounterPreemptionEvents = 5,
    SpansimCounterPreemptionVictims = 6,
    SpansimCounterOutagePodFailures = 7,
    SpansimCounterReplicaAdditions = 8,
    SpansimCounterObjectCount = 9,
    SpansimCounterMaxUnavailableObjects = 10,
}

/// Opaque: a loaded scenario plus pending overrides.
pub struct SpansimScenario {
    scenario: Scenario,
    seed_override: Option<u64>,
    overrides: PolicyOverrides,
}

/// Opaque: the metrics of one finished run.
pub struct SpansimReport {
    report: MetricsReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let cstring = CString::new(message).unwrap_or_else(|_| {
        CString::new("error message contained an interior nul byte").unwrap()
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next spansim call on the same thread.
#[no_mangle]
pub extern "C" fn spansim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map(|s| s.as_ptr()).unwrap_or(ptr::null()))
}

/// Library version as a static string; never freed.
#[no_mangle]
pub extern "C" fn spansim_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, SpansimStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(SpansimStatus::SpansimNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SpansimStatus::SpansimInvalidUtf8
    })
}

fn scenario_into_handle(scenario: Scenario, out: *mut *mut SpansimScenario) -> SpansimStatus {
    let handle = Box::new(SpansimScenario {
        scenario,
        seed_override: None,
        overrides: PolicyOverrides::default(),
    });
    unsafe { *out = Box::into_raw(handle) };
    SpansimStatus::SpansimOk
}

fn status_of_scenario_error(err: &spansim::scenario::ScenarioError) -> SpansimStatus {
    use spansim::scenario::ScenarioError;
    match err {
        ScenarioError::Io(_) => SpansimStatus::SpansimIoError,
        ScenarioError::Parse { .. } => SpansimStatus::SpansimParseError,
        ScenarioError::Invalid(_) | ScenarioError::BadOverride(_) => {
            SpansimStatus::SpansimInvalidScenario
        }
    }
}

/// Load a scenario from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle. The handle is released with
/// `spansim_scenario_free`.
#[no_mangle]
pub unsafe extern "C" fn spansim_scenario_load_file(
    path: *const c_char,
    out: *mut *mut SpansimScenario,
) -> SpansimStatus {
    clear_error();
    if out.is_null() {
        set_error("null out-pointer");
        return SpansimStatus::SpansimNullArgument;
    }
    let path = match cstr_arg(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match Scenario::load(Path::new(path)) {
        Ok(scenario) => scenario_into_handle(scenario, out),
        Err(e) => {
            set_error(e.to_string());
            status_of_scenario_error(&e)
        }
    }
}

/// Load a scenario from JSON text. Relative `trace_file` paths resolve
/// against the process working directory.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn spansim_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SpansimScenario,
) -> SpansimStatus {
    clear_error();
    if out.is_null() {
        set_error("null out-pointer");
        return SpansimStatus::SpansimNullArgument;
    }
    let json = match cstr_arg(json) {
        Ok(j) => j,
        Err(status) => return status,
    };
    match Scenario::from_json(json) {
        Ok(scenario) => scenario_into_handle(scenario, out),
        Err(e) => {
            set_error(e.to_string());
            status_of_scenario_error(&e)
        }
    }
}

/// Validate the scenario; `out_json` receives a JSON array of diagnostics
/// (empty array means clean), freed with `spansim_string_free`.
///
/// # Safety
/// `scenario` must be a live handle from a load call; `out_json` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spansim_scenario_validate(
    scenario: *const SpansimScenario,
    out_json: *mut *mut c_char,
) -> SpansimStatus {
    clear_error();
    if scenario.is_null() || out_json.is_null() {
        set_error("null argument");
        return SpansimStatus::SpansimNullArgument;
    }
    let diags = (*scenario).scenario.validate();
    let json = serde_json::to_string(&diags).expect("diagnostics serialize");
    match CString::new(json) {
        Ok(cstring) => {
            *out_json = cstring.into_raw();
            SpansimStatus::SpansimOk
        }
        Err(_) => {
            set_error("diagnostics contained a nul byte");
            SpansimStatus::SpansimRuntimeError
        }
    }
}

/// Override the workload generator seed for subsequent runs.
///
/// # Safety
/// `scenario` must be a live handle from a load call.
#[no_mangle]
pub unsafe extern "C" fn spansim_scenario_set_seed(
    scenario: *mut SpansimScenario,
    seed: u64,
) -> SpansimStatus {
    clear_error();
    if scenario.is_null() {
        set_error("null scenario handle");
        return SpansimStatus::SpansimNullArgument;
    }
    (*scenario).seed_override = Some(seed);
    SpansimStatus::SpansimOk
}

/// Apply one policy override, e.g. key "backfill", value "on". Keys:
/// ordering, quotas, reservations, backfill, halflife.
///
/// # Safety
/// `scenario` must be a live handle; `key` and `value` must be valid
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn spansim_scenario_set_policy(
    scenario: *mut SpansimScenario,
    key: *const c_char,
    value: *const c_char,
) -> SpansimStatus {
    clear_error();
    if scenario.is_null() {
        set_error("null scenario handle");
        return SpansimStatus::SpansimNullArgument;
    }
    let key = match cstr_arg(key) {
        Ok(k) => k,
        Err(status) => return status,
    };
    let value = match cstr_arg(value) {
        Ok(v) => v,
        Err(status) => return status,
    };
    match parse_policy_overrides(&[format!("{key}={value}")]) {
        Ok(parsed) => {
            let overrides = &mut (*scenario).overrides;
            overrides.ordering = parsed.ordering.or(overrides.ordering);
            overrides.quotas = parsed.quotas.or(overrides.quotas);
            overrides.reservations = parsed.reservations.or(overrides.reservations);
            overrides.backfill = parsed.backfill.or(overrides.backfill);
            overrides.halflife_seconds = parsed.halflife_seconds.or(overrides.halflife_seconds);
            SpansimStatus::SpansimOk
        }
        Err(e) => {
            set_error(e.to_string());
            SpansimStatus::SpansimInvalidScenario
        }
    }
}

/// # Safety
/// `scenario` must be a handle from a load call, not yet freed; null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn spansim_scenario_free(scenario: *mut SpansimScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Run the scenario to its horizon. On success `out` receives a report
/// handle, released with `spansim_report_free`.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spansim_run(
    scenario: *const SpansimScenario,
    out: *mut *mut SpansimReport,
) -> SpansimStatus {
    clear_error();
    if scenario.is_null() || out.is_null() {
        set_error("null argument");
        return SpansimStatus::SpansimNullArgument;
    }
    let handle = &*scenario;
    let resolved = match handle.scenario.resolve(handle.seed_override, &handle.overrides) {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return status_of_scenario_error(&e);
        }
    };
    match engine::run(&resolved) {
        Ok(outcome) => {
            *out = Box::into_raw(Box::new(SpansimReport { report: outcome.report }));
            SpansimStatus::SpansimOk
        }
        Err(e) => {
            set_error(e.to_string());
            SpansimStatus::SpansimRuntimeError
        }
    }
}

/// GPU utilization over the whole run, or -1 on a null handle.
///
/// # Safety
/// `report` must be a live handle from `spansim_run` or null.
#[no_mangle]
pub unsafe extern "C" fn spansim_report_gpu_utilization(report: *const SpansimReport) -> c_double {
    if report.is_null() {
        return -1.0;
    }
    (*report).report.gpu_utilization
}

/// CPU utilization over the whole run, or -1 on a null handle.
///
/// # Safety
/// `report` must be a live handle from `spansim_run` or null.
#[no_mangle]
pub unsafe extern "C" fn spansim_report_cpu_utilization(report: *const SpansimReport) -> c_double {
    if report.is_null() {
        return -1.0;
    }
    (*report).report.cpu_utilization
}

/// GPU-hours for one namespace, or for the whole cluster when `namespace`
/// is null.
///
/// # Safety
/// `report` must be a live handle; `namespace` may be null; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spansim_report_gpu_hours(
    report: *const SpansimReport,
    namespace: *const c_char,
    out: *mut c_double,
) -> SpansimStatus {
    clear_error();
    if report.is_null() || out.is_null() {
        set_error("null argument");
        return SpansimStatus::SpansimNullArgument;
    }
    let report = &(*report).report;
    if namespace.is_null() {
        *out = report.total.gpu_hours;
        return SpansimStatus::SpansimOk;
    }
    let namespace = match cstr_arg(namespace) {
        Ok(ns) => ns,
        Err(status) => return status,
    };
    match report.by_namespace.get(namespace) {
        Some(rollup) => {
            *out = rollup.gpu_hours;
            SpansimStatus::SpansimOk
        }
        None => {
            set_error(format!("unknown namespace \"{namespace}\""));
            SpansimStatus::SpansimInvalidScenario
        }
    }
}

/// Read one scalar counter; `u64::MAX` flags a null handle.
///
/// # Safety
/// `report` must be a live handle from `spansim_run` or null.
#[no_mangle]
pub unsafe extern "C" fn spansim_report_counter(
    report: *const SpansimReport,
    counter: SpansimCounter,
) -> u64 {
    if report.is_null() {
        return u64::MAX;
    }
    let r = &(*report).report;
    match counter {
        SpansimCounter::SpansimCounterArrivals => r.arrivals,
        SpansimCounter::SpansimCounterCompleted => r.completed,
        SpansimCounter::SpansimCounterRunningAtHorizon => r.running_at_horizon,
        SpansimCounter::SpansimCounterPendingAtHorizon => r.pending_at_horizon,
        SpansimCounter::SpansimCounterFailedAtHorizon => r.failed_at_horizon,
        SpansimCounter::SpansimCounterPreemptionEvents => r.preemption_events,
        SpansimCounter::SpansimCounterPreemptionVictims => r.preemption_victims,
        SpansimCounter::SpansimCounterOutagePodFailures => r.outage_pod_failures,
        SpansimCounter::SpansimCounterReplicaAdditions => r.replica_additions,
        SpansimCounter::SpansimCounterObjectCount => r.object_count,
        SpansimCounter::SpansimCounterMaxUnavailableObjects => r.max_unavailable_objects,
    }
}

/// Whole report as a JSON document; freed with `spansim_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spansim_report_summary_json(
    report: *const SpansimReport,
    out_json: *mut *mut c_char,
) -> SpansimStatus {
    clear_error();
    if report.is_null() || out_json.is_null() {
        set_error("null argument");
        return SpansimStatus::SpansimNullArgument;
    }
    let json = serde_json::to_string_pretty(&(*report).report).expect("report serializes");
    match CString::new(json) {
        Ok(cstring) => {
            *out_json = cstring.into_raw();
            SpansimStatus::SpansimOk
        }
        Err(_) => {
            set_error("report contained a nul byte");
            SpansimStatus::SpansimRuntimeError
        }
    }
}

/// # Safety
/// `report` must be a handle from `spansim_run`, not yet freed; null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn spansim_report_free(report: *mut SpansimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Release a string returned through an out-param.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not yet
/// freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn spansim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
