//! Command line: run, sweep, compare, validate and list.
//!
//! Exit codes: 0 success, 1 I/O or usage trouble outside the scenario,
//! 2 validation error, 3 runtime assertion failure, 4 failed ordering
//! assertion in `compare`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::builtins::{self, Suite, SuiteKind};
use crate::control::ConfigValue;
use crate::runner::{paired_comparison, run_all, runtime_problems, seeded, SagaAudit};
use crate::scenario::{parse_duration, Scenario, WorkloadSpec};
use crate::telemetry::{check_assertion, compare, table_row, Fixed3, MetricsReport, TABLE_HEADER};
use crate::world::{RunError, Simulation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_ORDERING: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mcfsim", version, about = "Deterministic microservice resilience simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario (file or built-in) or a built-in suite.
    Run(RunArgs),
    /// Run a scenario once per axis value and merge the results into a table.
    Sweep(SweepArgs),
    /// Compare two reports of the same scenario family.
    Compare(CompareArgs),
    /// Check a scenario without running it.
    Validate { target: String },
    /// List built-in scenarios and suites.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Canonical,
    Table,
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run length, e.g. `30s`, `500ms`, `2m`.
    #[arg(long)]
    pub duration: Option<String>,
    #[arg(long)]
    pub warmup: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub target: String,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Report file for a scenario, output directory for a suite.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "canonical")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// A sweep suite, or a scenario together with `--axis`.
    pub target: String,
    /// `users=...`, `rate=...` or `<config key>=...` with comma-separated values.
    #[arg(long)]
    pub axis: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Directory for the per-value reports and the merged table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Ordering to enforce, e.g. `latency:A<B`. Repeatable.
    #[arg(long = "assert")]
    pub asserts: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed invocation: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes()).map_err(|e| Failure::new(EXIT_IO, e.to_string()))
}

pub enum Target {
    Scenario(Box<Scenario>),
    Suite(Suite),
}

/// A path to a scenario file, else a built-in scenario, else a suite.
pub fn resolve(target: &str) -> Result<Target, Failure> {
    let path = Path::new(target);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        return Scenario::from_toml(&text).map(|s| Target::Scenario(Box::new(s))).map_err(|diags| {
            let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", path.display())).collect();
            Failure::new(EXIT_INVALID, lines.join("\n"))
        });
    }
    if let Some(s) = builtins::scenario(target) {
        return Ok(Target::Scenario(Box::new(s)));
    }
    if let Some(s) = builtins::suite(target) {
        return Ok(Target::Suite(s));
    }
    Err(Failure::new(EXIT_INVALID, format!("`{target}` is neither a scenario file nor a built-in (see `list`)")))
}

fn duration_ms(flag: &str, text: &str) -> Result<f64, Failure> {
    parse_duration(text)
        .map(|t| t.micros() as f64 / 1_000.0)
        .ok_or_else(|| Failure::new(EXIT_INVALID, format!("--{flag}: cannot parse `{text}` as a duration")))
}

/// Apply time overrides and re-validate. The seed is applied by the caller.
fn apply_times(s: &mut Scenario, o: &Overrides) -> Outcome {
    if let Some(d) = &o.duration {
        s.run.duration_ms = duration_ms("duration", d)?;
    }
    if let Some(w) = &o.warmup {
        s.run.warmup_ms = Some(duration_ms("warmup", w)?);
    }
    check(s)
}

fn check(s: &Scenario) -> Outcome {
    let diags = s.validate();
    if diags.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", s.name)).collect();
    Err(Failure::new(EXIT_INVALID, lines.join("\n")))
}

fn run_error(name: &str, e: RunError) -> Failure {
    match e {
        RunError::Invalid(m) => Failure::new(EXIT_INVALID, format!("{name}: {m}")),
        RunError::Telemetry(t) => Failure::new(EXIT_RUNTIME, format!("{name}: {t}")),
    }
}

/// Aggregate a finished run, failing on any broken runtime invariant.
fn finish(name: &str, sim: Result<Simulation, RunError>) -> Result<MetricsReport, Failure> {
    let sim = sim.map_err(|e| run_error(name, e))?;
    let problems = runtime_problems(&sim);
    if !problems.is_empty() {
        return Err(Failure::new(EXIT_RUNTIME, format!("{name}: {}", problems.join("; "))));
    }
    sim.report().map(|r| r.report).map_err(|e| run_error(name, e))
}

fn table_header(axis: &str) -> String {
    let rest = TABLE_HEADER.split_once(',').map_or("", |(_, r)| r);
    format!("{axis},{rest}\n")
}

fn render(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Canonical => report.to_canonical_json(),
        Format::Table => format!("{}{}\n", table_header("Scenario"), table_row(&report.scenario, report)),
    }
}

fn file_label(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Outcome {
    match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Validate { target } => {
            let s = match resolve(&target)? {
                Target::Scenario(s) => *s,
                Target::Suite(suite) => {
                    for (_, s) in &suite.members {
                        check(s)?;
                    }
                    return emit(out, "OK\n");
                }
            };
            check(&s)?;
            emit(out, "OK\n")
        }
        Command::List => {
            let mut text = String::from("scenarios:\n");
            for n in builtins::scenario_names() {
                let _ = writeln!(text, "  {n}");
            }
            text.push_str("suites:\n");
            for n in builtins::SUITES {
                let _ = writeln!(text, "  {n}");
            }
            emit(out, &text)
        }
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Outcome {
    match resolve(&a.target)? {
        Target::Scenario(s) => {
            let mut s = *s;
            if let Some(seed) = a.overrides.seed {
                s.run.seed = seed;
            }
            apply_times(&mut s, &a.overrides)?;
            let name = s.name.clone();
            let sim = run_all(vec![s]).pop().expect("one run");
            let text = render(&finish(&name, sim)?, a.format);
            match &a.out {
                Some(p) => write_file(p, &text),
                None => emit(out, &text),
            }
        }
        Target::Suite(suite) => {
            let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(suite.name));
            run_suite(suite, &a.overrides, &dir, a.format, out)
        }
    }
}

fn prepare(suite: &Suite, o: &Overrides) -> Result<Vec<(String, Scenario)>, Failure> {
    let mut members = seeded(suite, o.seed);
    for (_, s) in &mut members {
        apply_times(s, o)?;
    }
    Ok(members)
}

fn run_suite(suite: Suite, o: &Overrides, dir: &Path, format: Format, out: &mut dyn Write) -> Outcome {
    let members = prepare(&suite, o)?;
    match suite.kind {
        SuiteKind::Sweep => write_sweep(suite.axis, members, dir, format, out),
        SuiteKind::Paired => {
            let names: Vec<String> = members.iter().map(|(_, s)| s.name.clone()).collect();
            let sims = run_all(members.into_iter().map(|(_, s)| s).collect());
            let mut reports = Vec::new();
            for (name, sim) in names.iter().zip(sims) {
                let r = finish(name, sim)?;
                write_file(&dir.join(format!("{name}.json")), &r.to_canonical_json())?;
                reports.push(r);
            }
            let mut pairs = Vec::new();
            let mut it = reports.into_iter();
            while let (Some(a), Some(b)) = (it.next(), it.next()) {
                pairs.push((a, b));
            }
            let cmp = paired_comparison(&pairs).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
            write_file(&dir.join("comparison.json"), &cmp.to_canonical_json())?;
            let mut text = String::from("Scenario,Metric,MCF,Monolith,Ordering\n");
            for r in &cmp.rows {
                let v = |x: Option<Fixed3>| x.map_or_else(|| "-".to_string(), |x| format!("{:.3}", x.0));
                let ord = r.ordering.map_or("-".to_string(), |o| serde_json::to_value(o).expect("serializes").to_string());
                let _ = writeln!(text, "{},{},{},{},{}", r.scenario, r.metric, v(r.mcf), v(r.monolith), ord.trim_matches('"'));
            }
            emit(out, &text)
        }
        SuiteKind::Chaos => {
            let labels: Vec<String> = members.iter().map(|(l, _)| l.clone()).collect();
            let sims = run_all(members.into_iter().map(|(_, s)| s).collect());
            let mut audits = Vec::new();
            let mut problems = Vec::new();
            for (label, sim) in labels.iter().zip(sims) {
                let sim = sim.map_err(|e| run_error(label, e))?;
                problems.extend(runtime_problems(&sim).into_iter().map(|p| format!("{label}: {p}")));
                let audit = SagaAudit::of(label, &sim);
                if !audit.sound() || audit.stuck > 0 {
                    problems.push(format!("{label}: saga audit failed: {audit:?}"));
                }
                audits.push(audit);
            }
            let mut json = serde_json::to_string_pretty(&audits).expect("serializes");
            json.push('\n');
            write_file(&dir.join(format!("{}.json", file_label(suite.name))), &json)?;
            let mut text = String::from("Case,Sagas,Completed,Compensated,Stuck,Residue violations\n");
            for a in &audits {
                let _ =
                    writeln!(text, "{},{},{},{},{},{}", a.case, a.sagas, a.completed, a.compensated, a.stuck, a.residue_violations);
            }
            emit(out, &text)?;
            if problems.is_empty() {
                Ok(())
            } else {
                Err(Failure::new(EXIT_RUNTIME, problems.join("\n")))
            }
        }
    }
}

/// One merged row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub response_ms: Fixed3,
    pub throughput_tps: Fixed3,
    pub cpu_percent: Fixed3,
    pub memory_percent: Fixed3,
    pub network_kbps: Fixed3,
}

fn write_sweep(axis: &str, members: Vec<(String, Scenario)>, dir: &Path, format: Format, out: &mut dyn Write) -> Outcome {
    let labels: Vec<(String, String)> = members.iter().map(|(l, s)| (l.clone(), s.name.clone())).collect();
    let sims = run_all(members.into_iter().map(|(_, s)| s).collect());
    let mut reports = Vec::new();
    for ((label, name), sim) in labels.iter().zip(sims) {
        reports.push((label.clone(), name.clone(), finish(name, sim)?));
    }
    let table = match format {
        Format::Table => {
            let mut t = table_header(axis);
            for (label, _, r) in &reports {
                t.push_str(&table_row(label, r));
                t.push('\n');
            }
            t
        }
        Format::Canonical => {
            let rows: Vec<SweepRow> = reports
                .iter()
                .map(|(label, _, r)| SweepRow {
                    value: label.clone(),
                    response_ms: r.latency_ms.mean,
                    throughput_tps: r.throughput_tps,
                    cpu_percent: r.cpu_percent.aggregate,
                    memory_percent: r.memory_percent.aggregate,
                    network_kbps: r.network_kbps,
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rows).expect("serializes");
            s.push('\n');
            s
        }
    };
    for (_, name, r) in &reports {
        write_file(&dir.join(format!("{}.json", file_label(name))), &r.to_canonical_json())?;
    }
    let merged = match format {
        Format::Table => "table.csv",
        Format::Canonical => "table.json",
    };
    write_file(&dir.join(merged), &table)?;
    emit(out, &table)
}

/// Set one axis value on a scenario.
pub fn set_axis(s: &mut Scenario, key: &str, value: &str) -> Outcome {
    let bad = |why: &str| Failure::new(EXIT_INVALID, format!("--axis {key}={value}: {why}"));
    match key {
        "users" => match &mut s.workload {
            WorkloadSpec::ClosedLoop { users, .. } => *users = value.parse().map_err(|_| bad("not a user count"))?,
            _ => return Err(bad("the workload is not closed-loop")),
        },
        "rate" => {
            let r: f64 = value.parse().map_err(|_| bad("not a rate"))?;
            match &mut s.workload {
                WorkloadSpec::OpenLoop { rate_per_s, .. } => *rate_per_s = r,
                WorkloadSpec::Spike { base_rate_per_s, .. } => *base_rate_per_s = r,
                _ => return Err(bad("the workload has no rate")),
            }
        }
        _ => {
            let v = if let Ok(b) = value.parse::<bool>() {
                ConfigValue::Bool(b)
            } else if let Ok(i) = value.parse::<i64>() {
                ConfigValue::Int(i)
            } else if let Ok(x) = value.parse::<f64>() {
                ConfigValue::Float(x)
            } else {
                ConfigValue::Text(value.to_string())
            };
            s.config.set(key, v).map_err(|e| bad(&e.to_string()))?;
        }
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Outcome {
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
    match (resolve(&a.target)?, &a.axis) {
        (Target::Suite(suite), None) if suite.kind == SuiteKind::Sweep => {
            let members = prepare(&suite, &a.overrides)?;
            write_sweep(suite.axis, members, &dir, a.format, out)
        }
        (Target::Scenario(base), Some(axis)) => {
            let (key, values) =
                axis.split_once('=').ok_or_else(|| Failure::new(EXIT_INVALID, "--axis expects `name=v1,v2,...`"))?;
            let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
            if values.is_empty() {
                return Err(Failure::new(EXIT_INVALID, "--axis needs at least one value"));
            }
            let root = a.overrides.seed.unwrap_or(base.run.seed);
            let mut members = Vec::new();
            for (i, v) in values.iter().enumerate() {
                let mut s = (*base).clone();
                set_axis(&mut s, key, v)?;
                s.run.seed = root.wrapping_add(i as u64);
                if values.len() > 1 {
                    s.name = format!("{}_{}_{}", s.name, file_label(key), file_label(v));
                }
                apply_times(&mut s, &a.overrides)?;
                members.push((v.to_string(), s));
            }
            write_sweep(key, members, &dir, a.format, out)
        }
        (Target::Suite(s), _) => Err(Failure::new(EXIT_INVALID, format!("`{}` is not a sweep suite", s.name))),
        (Target::Scenario(_), None) => Err(Failure::new(EXIT_INVALID, "sweeping a scenario needs --axis")),
    }
}

fn read_report(path: &Path) -> Result<MetricsReport, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    MetricsReport::from_json(&text).map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))
}

fn cmd_compare(a: CompareArgs, out: &mut dyn Write) -> Outcome {
    let (ra, rb) = (read_report(&a.a)?, read_report(&a.b)?);
    let cmp = compare(&ra, &rb).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
    let text = cmp.to_canonical_json();
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => emit(out, &text)?,
    }
    let mut failed = Vec::new();
    for assertion in &a.asserts {
        let ok = check_assertion(&cmp, assertion).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
        if !ok {
            let metric = assertion.split_once(':').map_or(assertion.as_str(), |(m, _)| m);
            let detail = cmp.metric(metric).map_or_else(
                || "metric absent from one report".to_string(),
                |m| format!("A = {:.3}, B = {:.3}", m.a.0, m.b.0),
            );
            failed.push(format!("assertion `{assertion}` failed: {detail}"));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_ORDERING, failed.join("\n")))
    }
}

/// Parse arguments, execute, and map the result to an exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INVALID;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "{}", f.message);
            f.code
        }
    }
}
