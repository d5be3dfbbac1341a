//! Acceptance suite: one line per criterion, then a non-zero exit if any
//! criterion fails. Each criterion runs tasks from the bundled scenarios
//! and checks both the row verdicts and a wall-clock budget.

use renormtrace::cli::report::Row;
use renormtrace::cli::scenario::Scenario;
use renormtrace::cli::{run_scenario, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

struct Criterion {
    label: &'static str,
    scenario: &'static str,
    /// Task ids to run; empty means all.
    tasks: &'static [&'static str],
    budget_secs: f64,
}

const CRITERIA: &[Criterion] = &[
    Criterion { label: "finite-rank curvature identity, fd order 2", scenario: "lemma1_findim", tasks: &[], budget_secs: 5.0 },
    Criterion { label: "heat anchors and coefficient laws", scenario: "residue_calibration", tasks: &["heat_anchor"], budget_secs: 30.0 },
    Criterion { label: "residue of Q^(-1/2): symbol and zeta", scenario: "residue_calibration", tasks: &["residue"], budget_secs: 30.0 },
    Criterion { label: "weighted trace of commutators", scenario: "lemma2_checks", tasks: &["commutator_cos_sin", "commutator_exp_sign"], budget_secs: 60.0 },
    Criterion { label: "weight-family derivative", scenario: "lemma2_checks", tasks: &["weight_derivative"], budget_secs: 60.0 },
    Criterion { label: "cutoff curvature identity", scenario: "prop4_family", tasks: &["curvature"], budget_secs: 300.0 },
    Criterion { label: "renormalized curvature, both obstruction routes", scenario: "theorem3_family", tasks: &[], budget_secs: 600.0 },
    Criterion { label: "trace-form suite", scenario: "appendix_b_suite", tasks: &[], budget_secs: 300.0 },
    Criterion { label: "almost-complex-structure identities", scenario: "acs_identities", tasks: &[], budget_secs: 5.0 },
    Criterion { label: "synthetic expansion recovery", scenario: "renorm_synthetic", tasks: &[], budget_secs: 5.0 },
];

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn run(c: &Criterion) -> Result<(Vec<Row>, f64), String> {
    let mut sc = Scenario::load(&scenario_path(c.scenario)).map_err(|e| e.to_string())?;
    if !c.tasks.is_empty() {
        sc.tasks.retain(|t| c.tasks.contains(&t.id.as_str()));
        if sc.tasks.len() != c.tasks.len() {
            return Err(format!("missing tasks in {}: {:?}", c.scenario, c.tasks));
        }
    }
    let t0 = Instant::now();
    let rows = run_scenario(&sc, &Overrides::default());
    Ok((rows, t0.elapsed().as_secs_f64()))
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters come through here too.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (i, c) in CRITERIA.iter().enumerate() {
        let line = match run(c) {
            Ok((rows, secs)) => {
                let checked: Vec<&Row> = rows.iter().filter(|r| r.tolerance.is_some() || !r.pass).collect();
                let bad: Vec<&Row> = rows.iter().filter(|r| !r.pass).collect();
                let worst = checked
                    .iter()
                    .filter_map(|r| Some(r.defect? / r.tolerance?))
                    .fold(0.0_f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
                let ok = bad.is_empty() && secs < c.budget_secs;
                if !ok {
                    failed += 1;
                }
                let mut s = format!(
                    "criterion {:>2} {} {}: {} checks, worst defect/tolerance {:.2e}, {:.2} s (budget {} s)",
                    i + 1,
                    if ok { "PASS" } else { "FAIL" },
                    c.label,
                    checked.len(),
                    worst,
                    secs,
                    c.budget_secs
                );
                for r in bad {
                    s.push_str(&format!("\n      failing {}/{}: defect {:?} tol {:?} {}", r.task_id, r.quantity, r.defect, r.tolerance, r.note));
                }
                s
            }
            Err(e) => {
                failed += 1;
                format!("criterion {:>2} FAIL {}: {e}", i + 1, c.label)
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} of {} criteria pass", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
