use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use mcfsim_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mcf_last_error()) }.to_string_lossy().into_owned()
}

fn builtin(name: &str) -> *mut McfScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mcf_scenario_builtin(c(name).as_ptr(), &mut s) }, McfStatus::Ok);
    assert!(!s.is_null());
    s
}

fn run(s: *const McfScenario) -> *mut McfReport {
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { mcf_run(s, &mut r) }, McfStatus::Ok, "{}", last_error());
    r
}

fn json(r: *const McfReport) -> String {
    unsafe { CStr::from_ptr(mcf_report_json(r)) }.to_str().unwrap().to_owned()
}

#[test]
fn same_seed_gives_identical_json() {
    let s = builtin("telemetry_steady");
    assert_eq!(unsafe { mcf_scenario_set_seed(s, 42) }, McfStatus::Ok);
    let (a, b) = (run(s), run(s));
    assert_eq!(json(a), json(b));
    assert!(json(a).contains("\"seed\": 42"));
    unsafe {
        mcf_report_free(a);
        mcf_report_free(b);
        mcf_scenario_free(s);
    }
}

#[test]
fn metrics_and_comparison_cross_the_boundary() {
    let (sm, sb) = (builtin("network_mcf"), builtin("network_monolith"));
    let (m, b) = (run(sm), run(sb));
    let mut delay = 0.0;
    assert_eq!(unsafe { mcf_report_metric(m, c("network_delay").as_ptr(), &mut delay) }, McfStatus::Ok);
    assert_eq!(delay, 30.0);
    let mut holds = -1;
    assert_eq!(unsafe { mcf_compare(m, b, c("latency:A<B").as_ptr(), &mut holds) }, McfStatus::Ok);
    assert_eq!(holds, 1);
    assert_eq!(unsafe { mcf_compare(m, b, c("latency:A>B").as_ptr(), &mut holds) }, McfStatus::Ok);
    assert_eq!(holds, 0);
    let mut x = 0.0;
    assert_eq!(unsafe { mcf_report_metric(m, c("recovery").as_ptr(), &mut x) }, McfStatus::MetricAbsent);
    assert_eq!(unsafe { mcf_report_metric(m, c("bogus").as_ptr(), &mut x) }, McfStatus::UnknownMetric);
    assert!(last_error().contains("bogus"));
    unsafe {
        mcf_report_free(m);
        mcf_report_free(b);
        mcf_scenario_free(sm);
        mcf_scenario_free(sb);
    }
}

#[test]
fn comparing_different_families_is_refused() {
    let (s1, s2) = (builtin("network_mcf"), builtin("telemetry_steady"));
    let (a, b) = (run(s1), run(s2));
    let mut holds = 0;
    assert_eq!(unsafe { mcf_compare(a, b, c("latency:A<B").as_ptr(), &mut holds) }, McfStatus::ScenarioMismatch);
    unsafe {
        mcf_report_free(a);
        mcf_report_free(b);
        mcf_scenario_free(s1);
        mcf_scenario_free(s2);
    }
}

#[test]
fn invalid_documents_report_line_anchored_diagnostics() {
    let doc = "name = \"x\"\n[workload]\nkind = \"open_loop\"\nrate_per_s = 10.0\n[workload.mix]\nsearch_trip = 0.5\nbook_trip = 0.4\n";
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mcf_scenario_from_toml(c(doc).as_ptr(), &mut s) }, McfStatus::InvalidScenario);
    assert!(s.is_null());
    let e = last_error();
    assert!(e.contains("line 5") && e.contains("0.9"), "{e}");
}

#[test]
fn valid_documents_parse_and_run() {
    let doc = "name = \"tiny\"\n[workload]\nkind = \"open_loop\"\nrate_per_s = 20.0\n[run]\nduration_ms = 5000.0\n";
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mcf_scenario_from_toml(c(doc).as_ptr(), &mut s) }, McfStatus::Ok, "{}", last_error());
    let r = run(s);
    assert!(json(r).contains("\"scenario\": \"tiny\""));
    unsafe {
        mcf_report_free(r);
        mcf_scenario_free(s);
    }
}

#[test]
fn null_and_unknown_arguments_are_rejected() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mcf_scenario_builtin(ptr::null(), &mut s) }, McfStatus::NullArgument);
    assert_eq!(unsafe { mcf_scenario_builtin(c("nope").as_ptr(), &mut s) }, McfStatus::UnknownName);
    assert!(last_error().contains("nope"));
    assert_eq!(unsafe { mcf_scenario_builtin(c("normal_mcf").as_ptr(), ptr::null_mut()) }, McfStatus::NullArgument);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { mcf_run(ptr::null(), &mut r) }, McfStatus::NullArgument);
    assert_eq!(unsafe { mcf_scenario_set_seed(ptr::null_mut(), 1) }, McfStatus::NullArgument);
    assert!(unsafe { mcf_report_json(ptr::null()) }.is_null());
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { mcf_scenario_builtin(bad.as_ptr().cast(), &mut s) }, McfStatus::InvalidUtf8);
    unsafe {
        mcf_scenario_free(ptr::null_mut());
        mcf_report_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(mcf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/mcfsim.h")).unwrap();
    for f in [
        "mcf_last_error",
        "mcf_version",
        "mcf_scenario_from_toml",
        "mcf_scenario_builtin",
        "mcf_scenario_set_seed",
        "mcf_scenario_free",
        "mcf_run",
        "mcf_report_json",
        "mcf_report_metric",
        "mcf_compare",
        "mcf_report_free",
        "MCF_STATUS_OK = 0",
    ] {
        assert!(header.contains(f), "header lacks {f}");
    }
    let probe = std::env::temp_dir().join(format!("mcfsim_header_{}.c", std::process::id()));
    std::fs::write(&probe, "#include \"mcfsim.h\"\nint main(void) { McfScenario *s = 0; return mcf_scenario_builtin(\"x\", &s) == MCF_STATUS_OK; }\n")
        .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(format!("{dir}/include"))
        .arg(&probe)
        .status()
        .expect("a C compiler is available");
    let _ = std::fs::remove_file(&probe);
    assert!(status.success());
}
