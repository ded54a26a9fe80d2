use std::path::Path;
use std::process::{Command, Output};

use mcfsim::builtins;
use mcfsim::telemetry::MetricsReport;

fn mcfsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcfsim")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let a = mcfsim(&["run", "network_mcf", "--duration", "20s", "--out", "a.json"], tmp.path());
    let b = mcfsim(&["run", "network_mcf", "--duration", "20s", "--out", "b.json"], tmp.path());
    assert_eq!((code(&a), code(&b)), (0, 0), "{}", stderr(&a));
    let (ta, tb) = (std::fs::read(tmp.path().join("a.json")).unwrap(), std::fs::read(tmp.path().join("b.json")).unwrap());
    assert_eq!(ta, tb);
    MetricsReport::from_json(std::str::from_utf8(&ta).unwrap()).unwrap();
}

#[test]
fn run_without_out_prints_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mcfsim(&["run", "network_mcf", "--duration", "20s", "--seed", "9"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = MetricsReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.seed, 9);
    assert!(files_in(tmp.path()).is_empty());
}

#[test]
fn compare_exit_codes_follow_the_assertions() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, file) in [("network_mcf", "m.json"), ("network_monolith", "b.json"), ("telemetry_steady", "t.json")] {
        let o = mcfsim(&["run", name, "--duration", "20s", "--out", file], tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(code(&mcfsim(&["compare", "m.json", "b.json", "--assert", "latency:A<B"], tmp.path())), 0);
    let failed = mcfsim(&["compare", "m.json", "b.json", "--assert", "latency:A>B"], tmp.path());
    assert_eq!(code(&failed), 4);
    assert!(stderr(&failed).contains("A = ") && stderr(&failed).contains("B = "), "{}", stderr(&failed));
    assert_eq!(code(&mcfsim(&["compare", "m.json", "t.json"], tmp.path())), 2);
    assert_eq!(code(&mcfsim(&["compare", "m.json", "missing.json"], tmp.path())), 1);
}

#[test]
fn invalid_scenarios_exit_2_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = "name = \"bad\"\n[workload]\nkind = \"open_loop\"\nrate_per_s = 10.0\n[workload.mix]\nsearch_trip = 0.5\nbook_trip = 0.4\n";
    std::fs::write(tmp.path().join("bad.toml"), doc).unwrap();
    let o = mcfsim(&["run", "bad.toml", "--out", "r.json"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
    assert!(!tmp.path().join("r.json").exists());
    let v = mcfsim(&["validate", "bad.toml"], tmp.path());
    assert_eq!(code(&v), 2);
    assert_eq!(code(&mcfsim(&["validate", "normal_mcf"], tmp.path())), 0);
    assert_eq!(code(&mcfsim(&["run", "no_such_thing"], tmp.path())), 2);
    assert_eq!(code(&mcfsim(&["run", "normal_mcf", "--duration", "soon"], tmp.path())), 2);
    assert_eq!(code(&mcfsim(&["bogus"], tmp.path())), 2);
}

#[test]
fn sweep_writes_one_report_per_value_plus_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mcfsim(&["sweep", "network_mcf", "--axis", "rate=20,40,60", "--duration", "20s", "--out", "s"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files = files_in(&tmp.path().join("s"));
    assert_eq!(files.len(), 4, "{files:?}");
    assert!(files.contains(&"table.csv".to_string()));
    let table = std::fs::read_to_string(tmp.path().join("s/table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn single_value_sweep_matches_a_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let base = builtins::scenario("network_mcf").unwrap();
    let toml_rate = match base.workload {
        mcfsim::scenario::WorkloadSpec::OpenLoop { rate_per_s, .. } => rate_per_s,
        _ => panic!("network_mcf is open loop"),
    };
    let axis = format!("rate={toml_rate}");
    let s = mcfsim(&["sweep", "network_mcf", "--axis", &axis, "--duration", "20s", "--out", "s"], tmp.path());
    let r = mcfsim(&["run", "network_mcf", "--duration", "20s", "--out", "r.json"], tmp.path());
    assert_eq!((code(&s), code(&r)), (0, 0), "{}{}", stderr(&s), stderr(&r));
    let swept = std::fs::read(tmp.path().join("s/network_mcf.json")).unwrap();
    assert_eq!(swept, std::fs::read(tmp.path().join("r.json")).unwrap());
}

#[test]
fn list_names_every_builtin_and_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mcfsim(&["list"], tmp.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for n in builtins::scenario_names() {
        assert!(text.contains(&n), "missing {n}");
    }
    for n in builtins::SUITES {
        assert!(text.contains(n), "missing {n}");
    }
}

#[test]
fn help_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mcfsim(&["--help"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("sweep"));
}
