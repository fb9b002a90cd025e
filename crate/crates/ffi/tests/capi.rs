//! Round-trips through the C ABI: load, override, run, read metrics, and
//! every error path a binding author will hit first.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::PathBuf;
use std::ptr;

use spansim_ffi::*;

fn scenario_file(name: &str) -> CString {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let ptr = spansim_last_error_message();
    assert!(!ptr.is_null(), "an error message is set");
    unsafe { CStr::from_ptr(ptr).to_string_lossy().into_owned() }
}

unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let s = CStr::from_ptr(ptr).to_string_lossy().into_owned();
    spansim_string_free(ptr);
    s
}

#[test]
fn version_is_a_static_string() {
    let version = unsafe { CStr::from_ptr(spansim_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn full_load_run_read_cycle() {
    unsafe {
        let mut scenario: *mut SpansimScenario = ptr::null_mut();
        let status = spansim_scenario_load_file(scenario_file("reference-fifo").as_ptr(), &mut scenario);
        assert_eq!(status, SpansimStatus::SpansimOk);

        let mut diags_json: *mut c_char = ptr::null_mut();
        assert_eq!(
            spansim_scenario_validate(scenario, &mut diags_json),
            SpansimStatus::SpansimOk
        );
        assert_eq!(take_string(diags_json), "[]", "shipped scenario is clean");

        let mut report: *mut SpansimReport = ptr::null_mut();
        assert_eq!(spansim_run(scenario, &mut report), SpansimStatus::SpansimOk);

        let util = spansim_report_gpu_utilization(report);
        assert!(util > 0.0 && util <= 1.0, "utilization {util}");

        let arrivals = spansim_report_counter(report, SpansimCounter::SpansimCounterArrivals);
        let completed = spansim_report_counter(report, SpansimCounter::SpansimCounterCompleted);
        let running =
            spansim_report_counter(report, SpansimCounter::SpansimCounterRunningAtHorizon);
        let pending =
            spansim_report_counter(report, SpansimCounter::SpansimCounterPendingAtHorizon);
        let failed = spansim_report_counter(report, SpansimCounter::SpansimCounterFailedAtHorizon);
        assert_eq!(arrivals, 200);
        assert_eq!(arrivals, completed + running + pending + failed);

        let mut total_hours = 0f64;
        assert_eq!(
            spansim_report_gpu_hours(report, ptr::null(), &mut total_hours),
            SpansimStatus::SpansimOk
        );
        let ns = CString::new("astro").unwrap();
        let mut astro_hours = 0f64;
        assert_eq!(
            spansim_report_gpu_hours(report, ns.as_ptr(), &mut astro_hours),
            SpansimStatus::SpansimOk
        );
        assert!(astro_hours > 0.0 && astro_hours <= total_hours);

        let missing = CString::new("nope").unwrap();
        let mut sink = 0f64;
        assert_eq!(
            spansim_report_gpu_hours(report, missing.as_ptr(), &mut sink),
            SpansimStatus::SpansimInvalidScenario
        );
        assert!(last_error().contains("nope"));

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(spansim_report_summary_json(report, &mut json), SpansimStatus::SpansimOk);
        let parsed: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(parsed["scenario"], "reference-fifo");

        spansim_report_free(report);
        spansim_scenario_free(scenario);
    }
}

#[test]
fn seed_and_policy_overrides_change_the_run() {
    unsafe {
        let mut scenario: *mut SpansimScenario = ptr::null_mut();
        assert_eq!(
            spansim_scenario_load_file(
                scenario_file("reservation-vs-fifo").as_ptr(),
                &mut scenario
            ),
            SpansimStatus::SpansimOk
        );
        let mut baseline: *mut SpansimReport = ptr::null_mut();
        assert_eq!(spansim_run(scenario, &mut baseline), SpansimStatus::SpansimOk);
        let base_util = spansim_report_gpu_utilization(baseline);

        let key = CString::new("backfill").unwrap();
        let on = CString::new("on").unwrap();
        assert_eq!(
            spansim_scenario_set_policy(scenario, key.as_ptr(), on.as_ptr()),
            SpansimStatus::SpansimOk
        );
        let key = CString::new("reservations").unwrap();
        assert_eq!(
            spansim_scenario_set_policy(scenario, key.as_ptr(), on.as_ptr()),
            SpansimStatus::SpansimOk
        );
        let mut variant: *mut SpansimReport = ptr::null_mut();
        assert_eq!(spansim_run(scenario, &mut variant), SpansimStatus::SpansimOk);
        let variant_util = spansim_report_gpu_utilization(variant);
        assert!(variant_util > base_util, "{variant_util} should beat {base_util}");
        assert!(
            spansim_report_counter(variant, SpansimCounter::SpansimCounterPreemptionVictims) > 0
        );

        // A seed override changes the generated trace.
        assert_eq!(spansim_scenario_set_seed(scenario, 99), SpansimStatus::SpansimOk);
        let mut reseeded: *mut SpansimReport = ptr::null_mut();
        assert_eq!(spansim_run(scenario, &mut reseeded), SpansimStatus::SpansimOk);
        let mut json_a: *mut c_char = ptr::null_mut();
        let mut json_b: *mut c_char = ptr::null_mut();
        spansim_report_summary_json(variant, &mut json_a);
        spansim_report_summary_json(reseeded, &mut json_b);
        assert_ne!(take_string(json_a), take_string(json_b));

        spansim_report_free(baseline);
        spansim_report_free(variant);
        spansim_report_free(reseeded);
        spansim_scenario_free(scenario);
    }
}

#[test]
fn repeated_runs_are_deterministic() {
    unsafe {
        let mut scenario: *mut SpansimScenario = ptr::null_mut();
        assert_eq!(
            spansim_scenario_load_file(scenario_file("fairshare-demo").as_ptr(), &mut scenario),
            SpansimStatus::SpansimOk
        );
        let run_json = || {
            let mut report: *mut SpansimReport = ptr::null_mut();
            assert_eq!(spansim_run(scenario, &mut report), SpansimStatus::SpansimOk);
            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(
                spansim_report_summary_json(report, &mut json),
                SpansimStatus::SpansimOk
            );
            let s = take_string(json);
            spansim_report_free(report);
            s
        };
        assert_eq!(run_json(), run_json());
        spansim_scenario_free(scenario);
    }
}

#[test]
fn error_paths_set_messages_and_codes() {
    unsafe {
        let mut scenario: *mut SpansimScenario = ptr::null_mut();

        // Null arguments.
        assert_eq!(
            spansim_scenario_load_file(ptr::null(), &mut scenario),
            SpansimStatus::SpansimNullArgument
        );
        assert_eq!(
            spansim_scenario_load_file(scenario_file("reference-fifo").as_ptr(), ptr::null_mut()),
            SpansimStatus::SpansimNullArgument
        );

        // Missing file.
        let missing = CString::new("/nonexistent/scenario.json").unwrap();
        assert_eq!(
            spansim_scenario_load_file(missing.as_ptr(), &mut scenario),
            SpansimStatus::SpansimIoError
        );

        // Broken JSON.
        let garbage = CString::new("{not json").unwrap();
        assert_eq!(
            spansim_scenario_from_json(garbage.as_ptr(), &mut scenario),
            SpansimStatus::SpansimParseError
        );
        assert!(last_error().contains("line"));

        // Structurally invalid scenario: validation reports a diagnostic and
        // the run refuses.
        let invalid = CString::new(
            r#"{
                "inventory": {
                    "regions": [{"id": "west"}],
                    "locations": [{"id": "w1", "region": "west"}],
                    "gpu_models": [],
                    "nodes": [{"id": "n1", "location": "w1", "cpu_capacity": 0,
                               "mem_capacity": 1, "gpus": [], "lifecycle": "os-managed"}]
                },
                "namespaces": [{"id": "lab"}],
                "workload": {"trace": []},
                "horizon_seconds": 10
            }"#,
        )
        .unwrap();
        assert_eq!(
            spansim_scenario_from_json(invalid.as_ptr(), &mut scenario),
            SpansimStatus::SpansimOk,
            "parse succeeds; validation is separate"
        );
        let mut diags_json: *mut c_char = ptr::null_mut();
        assert_eq!(
            spansim_scenario_validate(scenario, &mut diags_json),
            SpansimStatus::SpansimOk
        );
        let diags = take_string(diags_json);
        assert!(diags.contains("BadCapacity"), "diagnostics: {diags}");
        let mut report: *mut SpansimReport = ptr::null_mut();
        assert_eq!(
            spansim_run(scenario, &mut report),
            SpansimStatus::SpansimInvalidScenario
        );

        // Unknown policy key.
        let key = CString::new("turbo").unwrap();
        let value = CString::new("on").unwrap();
        assert_eq!(
            spansim_scenario_set_policy(scenario, key.as_ptr(), value.as_ptr()),
            SpansimStatus::SpansimInvalidScenario
        );
        assert!(last_error().contains("turbo"));

        spansim_scenario_free(scenario);
        // Frees tolerate null.
        spansim_scenario_free(ptr::null_mut());
        spansim_report_free(ptr::null_mut());
        spansim_string_free(ptr::null_mut());
    }
}

#[test]
fn generated_header_exports_the_api() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/spansim.h");
    let text = std::fs::read_to_string(header).expect("build.rs generated the header");
    for symbol in [
        "typedef struct SpansimScenario SpansimScenario;",
        "typedef struct SpansimReport SpansimReport;",
        "spansim_scenario_load_file",
        "spansim_run",
        "spansim_report_counter",
        "spansim_string_free",
        "spansim_last_error_message",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}
