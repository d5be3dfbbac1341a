//! Command-line driver: `run`, `sweep` and `list-tasks`.
//!
//! Exit status is 0 when every row passes, 1 when some row fails or a task
//! errors, 2 on scenario parse or usage errors.

pub mod report;
pub mod scenario;
pub mod tasks;

use crate::error::{Error, Result};
use crate::renorm::Precision;
use clap::{Args, Parser, Subcommand, ValueEnum};
use report::Row;
use scenario::{Format, Scenario, TaskKind};
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use tasks::{loglog_slope, Context};

#[derive(Debug, Parser)]
#[command(name = "renormtrace", version, about = "Renormalized traces, determinant-bundle curvature and their numerical checks")]
pub struct Cli {
    /// Print the task kinds a scenario may use and exit.
    #[arg(long)]
    pub list_tasks: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task of a scenario and write the report.
    Run(RunArgs),
    /// Re-run a scenario over values of one numeric parameter.
    Sweep(SweepArgs),
    /// Print the task kinds a scenario may use.
    ListTasks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Default,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Report path; stdout when absent and the scenario names none.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report format; defaults to the scenario's, else JSON.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Stop at the first failing or erroring task.
    #[arg(long)]
    pub fail_fast: bool,
    /// Worker threads for parallel sections.
    #[arg(long, env = "RENORMTRACE_THREADS")]
    pub threads: Option<usize>,
    /// Accumulation precision for the asymptotic fits.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dotted path into the scenario, e.g. `mu`, `eps_grid.min` or
    /// `tasks.<id>.fd_step`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub values: Vec<f64>,
}

/// Run options that do not live in the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub precision: Option<Precision>,
    pub fail_fast: bool,
    /// Progress lines on stderr.
    pub verbose: bool,
}

/// Runs all tasks in order. Task errors become failing `error` rows.
pub fn run_scenario(sc: &Scenario, ov: &Overrides) -> Vec<Row> {
    let ctx = Context { scenario: sc, precision: ov.precision };
    let mut rows = Vec::new();
    for spec in &sc.tasks {
        let t0 = Instant::now();
        let out = ctx.run_task(spec).unwrap_or_else(|e| vec![Row::failure(&spec.id, e.to_string())]);
        let ok = out.iter().all(|r| r.pass);
        if ov.verbose {
            eprintln!("[{}] {} ({}) {:.2}s", if ok { "pass" } else { "FAIL" }, spec.id, spec.kind.name(), t0.elapsed().as_secs_f64());
        }
        rows.extend(out);
        if !ok && ov.fail_fast {
            break;
        }
    }
    rows
}

/// Sets `path` in a scenario document. Array elements of `tasks` are
/// addressed by task id or by index.
pub fn set_param(doc: &mut Value, path: &str, value: f64) -> Result<()> {
    let unknown = || Error::InvalidInput(format!("unknown parameter {path:?}"));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(unknown());
    }
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    // Absent keys may be defaulted fields; the re-parse
                    // rejects anything that is not.
                    map.insert(key.to_string(), num_value(value));
                    return Ok(());
                }
                map.get_mut(*key).ok_or_else(unknown)?
            }
            Value::Array(items) => {
                let idx = match key.parse::<usize>() {
                    Ok(k) => k,
                    Err(_) => items.iter().position(|t| t.get("id").and_then(Value::as_str) == Some(*key)).ok_or_else(unknown)?,
                };
                let slot = items.get_mut(idx).ok_or_else(unknown)?;
                if last {
                    *slot = num_value(value);
                    return Ok(());
                }
                slot
            }
            _ => return Err(unknown()),
        };
    }
    Err(unknown())
}

/// Integral values become JSON integers so integer fields accept them.
fn num_value(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

#[derive(Debug, Serialize)]
pub struct SweepRun {
    pub value: f64,
    pub pass: bool,
    pub rows: Vec<Row>,
}

#[derive(Debug, Serialize)]
pub struct SweepSeries {
    pub task_id: String,
    pub quantity: String,
    /// (parameter value, defect) pairs.
    pub points: Vec<[f64; 2]>,
    /// Log-log slope of defect against the parameter, when all points are
    /// positive.
    pub slope: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub param: String,
    pub pass: bool,
    pub runs: Vec<SweepRun>,
    pub series: Vec<SweepSeries>,
}

pub fn sweep(doc: &Value, param: &str, values: &[f64], ov: &Overrides) -> Result<SweepReport> {
    let mut runs = Vec::new();
    let mut name = String::new();
    for &v in values {
        let mut d = doc.clone();
        set_param(&mut d, param, v)?;
        let sc: Scenario = serde_json::from_value(d).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") {
                Error::InvalidInput(format!("unknown parameter {param:?}: {msg}"))
            } else {
                Error::Parse(format!("{param} = {v}: {msg}"))
            }
        })?;
        sc.validate()?;
        name = sc.name.clone();
        let rows = run_scenario(&sc, ov);
        runs.push(SweepRun { value: v, pass: rows.iter().all(|r| r.pass), rows });
    }
    let mut acc: BTreeMap<(String, String), Vec<[f64; 2]>> = BTreeMap::new();
    for run in &runs {
        for r in &run.rows {
            if let Some(d) = r.defect {
                acc.entry((r.task_id.clone(), r.quantity.clone())).or_default().push([run.value, d]);
            }
        }
    }
    let series = acc
        .into_iter()
        .map(|((task_id, quantity), points)| {
            let x: Vec<f64> = points.iter().map(|p| p[0]).collect();
            let y: Vec<f64> = points.iter().map(|p| p[1]).collect();
            let slope = loglog_slope(&x, &y).ok();
            SweepSeries { task_id, quantity, points, slope }
        })
        .collect();
    Ok(SweepReport { scenario: name, param: param.to_string(), pass: runs.iter().all(|r| r.pass), runs, series })
}

/// CSV with a leading parameter column; one line per (value, row).
pub fn sweep_csv(rep: &SweepReport) -> String {
    let mut out = format!("param,param_value,{}\n", report::CSV_HEADER);
    for run in &rep.runs {
        for line in report::to_csv(&run.rows).lines().skip(1) {
            out.push_str(&format!("{},{:.16e},{line}\n", rep.param, run.value));
        }
    }
    out
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn setup(args: &RunArgs) -> Overrides {
    if let Some(n) = args.threads {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Overrides {
        precision: args.precision.map(|p| match p {
            PrecisionArg::Default => Precision::Default,
            PrecisionArg::Extended => Precision::Extended,
        }),
        fail_fast: args.fail_fast,
        verbose: true,
    }
}

fn resolve_format(args: &RunArgs, sc: &Scenario) -> (Format, Option<PathBuf>) {
    let format = match args.format {
        Some(FormatArg::Json) => Format::Json,
        Some(FormatArg::Csv) => Format::Csv,
        None => sc.output.as_ref().map(|o| o.format).unwrap_or(Format::Json),
    };
    let out = args.out.clone().or_else(|| sc.output.as_ref().and_then(|o| o.path.clone().map(PathBuf::from)));
    (format, out)
}

fn cmd_run(args: &RunArgs) -> std::result::Result<bool, (u8, Error)> {
    let sc = Scenario::load(&args.scenario).map_err(|e| (2, e))?;
    let ov = setup(args);
    let rows = run_scenario(&sc, &ov);
    let (format, out) = resolve_format(args, &sc);
    emit(&report::render(&sc.name, &rows, format), out.as_deref()).map_err(|e| (2, e))?;
    Ok(rows.iter().all(|r| r.pass))
}

fn cmd_sweep(args: &SweepArgs) -> std::result::Result<bool, (u8, Error)> {
    let text = std::fs::read_to_string(&args.run.scenario)
        .map_err(|e| (2, Error::Parse(format!("{}: {e}", args.run.scenario.display()))))?;
    let sc = Scenario::parse(&text).map_err(|e| (2, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| (2, Error::Parse(e.to_string())))?;
    let ov = setup(&args.run);
    let rep = sweep(&doc, &args.param, &args.values, &ov).map_err(|e| (2, e))?;
    for s in &rep.series {
        if let Some(k) = s.slope {
            eprintln!("slope {} {}: {k:.4}", s.task_id, s.quantity);
        }
    }
    let (format, out) = resolve_format(&args.run, &sc);
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&rep).expect("sweep report serializes") + "\n",
        Format::Csv => sweep_csv(&rep),
    };
    emit(&text, out.as_deref()).map_err(|e| (2, e))?;
    Ok(rep.pass)
}

pub fn list_tasks() -> String {
    TaskKind::catalogue().iter().map(|(k, d)| format!("{k:<22} {d}\n")).collect()
}

/// Process entry point.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match &cli.command {
        Some(Command::Run(a)) => cmd_run(a),
        Some(Command::Sweep(a)) => cmd_sweep(a),
        None if !cli.list_tasks => {
            eprintln!("error: a subcommand is required (run, sweep, list-tasks)");
            return ExitCode::from(2);
        }
        Some(Command::ListTasks) | None => {
            print!("{}", list_tasks());
            Ok(true)
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn set_param_by_id_and_path() {
        let mut d = json!({"mu": 0.0, "eps_grid": {"min": 1e-3}, "tasks": [{"id": "a", "task": "x"}]});
        set_param(&mut d, "mu", 0.5).unwrap();
        set_param(&mut d, "eps_grid.min", 2e-3).unwrap();
        set_param(&mut d, "tasks.a.fd_step", 1e-4).unwrap();
        set_param(&mut d, "tasks.0.trials", 3.0).unwrap();
        assert_eq!(d["mu"], 0.5);
        assert_eq!(d["tasks"][0]["fd_step"], 1e-4);
        assert_eq!(d["tasks"][0]["trials"], 3);
        assert!(set_param(&mut d, "tasks.zz.fd_step", 1.0).is_err());
        assert!(set_param(&mut d, "nope.x", 1.0).is_err());
        assert!(set_param(&mut d, "", 1.0).is_err());
    }
}
