//! Acceptance suite. Runs every criterion at full scale from
//! `configs/reference.ini` and prints one line per criterion.
//!
//! Runs with `harness = false`, so `cargo test --test acceptance` shows the
//! lines without `--nocapture`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use itolab::config::{parse_config, Plan, Section};
use itolab::report::{Row, Verdict};
use itolab::run::{run, run_section};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Plan {
    let text = std::fs::read_to_string(configs().join(name)).expect("config readable");
    parse_config(&text).expect("config parses")
}

struct Outcome {
    ok: bool,
    detail: String,
}

/// Every judged row passes and at least one row was judged.
fn judge(rows: &[&Row]) -> Outcome {
    let judged: Vec<&&Row> = rows.iter().filter(|r| r.verdict != Verdict::Info).collect();
    let bad: Vec<String> = judged
        .iter()
        .filter(|r| r.verdict != Verdict::Pass)
        .map(|r| {
            let n = r.n.map(|n| format!(" n={n}")).unwrap_or_default();
            format!("{}{n}={:.4e} ({})", r.statistic, r.value, r.verdict)
        })
        .collect();
    let ok = !judged.is_empty() && bad.is_empty();
    let detail = if judged.is_empty() {
        "no judged rows".to_string()
    } else if bad.is_empty() {
        format!("{} judged rows pass", judged.len())
    } else {
        bad.join(", ")
    };
    Outcome { ok, detail }
}

fn timed(section: &Section) -> (Vec<Row>, Duration) {
    let t = Instant::now();
    let rows = run_section(section).unwrap_or_else(|e| panic!("[{}] failed to run: {e}", section.name));
    (rows, t.elapsed())
}

fn with_budget(mut o: Outcome, took: Duration, budget: Duration) -> Outcome {
    o.detail = format!("{}; {:.1}s of {:.0}s", o.detail, took.as_secs_f64(), budget.as_secs_f64());
    o.ok &= took <= budget;
    o
}

fn select<'a>(rows: &'a [Row], prefix: &str) -> Vec<&'a Row> {
    rows.iter().filter(|r| r.statistic.starts_with(prefix)).collect()
}

fn all(rows: &[Row]) -> Vec<&Row> {
    rows.iter().collect()
}

fn section(plan: &Plan, name: &str) -> Section {
    plan.section(name).unwrap_or_else(|| panic!("reference config lacks [{name}]")).clone()
}

fn counterexample_sine(plan: &Plan) -> Outcome {
    let mut s = section(plan, "counterexample");
    s.set("which", "sine");
    s.set("ladder", "4, 16, 64");
    let (rows, took) = timed(&s);
    with_budget(judge(&select(&rows, "sine_")), took, Duration::from_secs(60))
}

fn counterexample_spike(plan: &Plan) -> Outcome {
    let mut s = section(plan, "counterexample");
    s.set("which", "spike");
    s.set("ladder", "4, 16");
    let (rows, _) = timed(&s);
    judge(&select(&rows, "spike_"))
}

fn whole(plan: &Plan, name: &str) -> Outcome {
    let (rows, _) = timed(&section(plan, name));
    judge(&all(&rows))
}

fn translation(plan: &Plan) -> Outcome {
    let mut s = section(plan, "translate");
    s.set("sources", "transport, claw");
    let (rows, took) = timed(&s);
    let mut o = judge(&all(&rows));
    for src in ["transport", "claw"] {
        o.ok &= select(&rows, &format!("{src}_uniformity")).len() == 1;
    }
    with_budget(o, took, Duration::from_secs(300))
}

fn transport(plan: &Plan) -> Outcome {
    let (rows, took) = timed(&section(plan, "transport"));
    let mut o = judge(&all(&rows));
    // a red monitor would turn the gated rows into `invalid`, caught by judge
    o.ok &= select(&rows, "hypothesis_monitors").iter().all(|r| r.value == 1.0);
    with_budget(o, took, Duration::from_secs(600))
}

fn determinism() -> Outcome {
    let plan = load("quick.ini");
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().expect("tempdir")).collect();
    for (d, workers) in dirs.iter().zip([1, 2, 4]) {
        run(&plan, "all", d.path(), Some(workers)).expect("run all");
    }
    let mut differing = Vec::new();
    let mut files = 0;
    for entry in std::fs::read_dir(dirs[0].path()).expect("listing") {
        let name = entry.expect("entry").file_name();
        let first = std::fs::read(dirs[0].path().join(&name)).expect("csv");
        files += 1;
        for d in &dirs[1..] {
            if std::fs::read(d.path().join(&name)).ok().as_ref() != Some(&first) {
                differing.push(name.to_string_lossy().into_owned());
            }
        }
    }
    let ok = files == itolab::config::EXPERIMENTS.len() && differing.is_empty();
    let detail = if differing.is_empty() {
        format!("{files} files identical at 1, 2 and 4 workers")
    } else {
        format!("differ: {}", differing.join(", "))
    };
    Outcome { ok, detail }
}

fn corollary(plan: &Plan, family: &str) -> Outcome {
    let mut s = section(plan, "corollary42");
    s.set("families", family);
    let (rows, _) = timed(&s);
    judge(&select(&rows, &format!("{family}_")))
}

fn main() -> ExitCode {
    let plan = load("reference.ini");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("counterexample sine second moment", Box::new(|| counterexample_sine(&plan))),
        ("counterexample spike law", Box::new(|| counterexample_spike(&plan))),
        ("isometry suite and discrete identity", Box::new(|| whole(&plan, "isometry"))),
        ("mollifier calculus", Box::new(|| whole(&plan, "mollifier"))),
        ("translation rates", Box::new(|| translation(&plan))),
        ("weak-in-omega sweep and decomposition", Box::new(|| whole(&plan, "theorem21"))),
        ("temporal oscillation negative control", Box::new(|| corollary(&plan, "temporal"))),
        ("spatial oscillation strong pairing", Box::new(|| corollary(&plan, "spatial"))),
        ("transport stability", Box::new(|| transport(&plan))),
        ("kinetic suite", Box::new(|| whole(&plan, "claw"))),
        ("end-to-end determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2}. {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
