use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use itolab::config::parse_config;
use itolab::run::run;

#[derive(Parser)]
#[command(name = "itolab", about = "Weak-convergence experiments for stochastic integrals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the CSV reports.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Replaces the seed of every section.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    Isometry(Common),
    Mollifier(Common),
    Translate(Common),
    Counterexample(Common),
    Theorem21(Common),
    L1mode(Common),
    Corollary42(Common),
    Transport(Common),
    Claw(Common),
    All(Common),
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Command::Isometry(c) => ("isometry", c),
            Command::Mollifier(c) => ("mollifier", c),
            Command::Translate(c) => ("translate", c),
            Command::Counterexample(c) => ("counterexample", c),
            Command::Theorem21(c) => ("theorem21", c),
            Command::L1mode(c) => ("l1mode", c),
            Command::Corollary42(c) => ("corollary42", c),
            Command::Transport(c) => ("transport", c),
            Command::Claw(c) => ("claw", c),
            Command::All(c) => ("all", c),
        }
    }
}

fn main() -> ExitCode {
    let (name, args) = Cli::parse().command.split();
    let outcome = std::fs::read_to_string(&args.config)
        .map_err(itolab::Error::from)
        .and_then(|text| parse_config(&text))
        .and_then(|mut plan| {
            if let Some(s) = args.seed_override {
                plan.override_seed(s);
            }
            run(&plan, name, &args.out, args.workers)
        });
    match outcome {
        Ok(summary) => {
            let failed = summary.failures();
            if failed.is_empty() {
                eprintln!("{name}: {} rows, all verdicts pass", summary.rows.len());
                ExitCode::SUCCESS
            } else {
                eprintln!("{name}: {} of {} rows did not pass", failed.len(), summary.rows.len());
                for r in failed {
                    let n = r.n.map(|n| format!(" n={n}")).unwrap_or_default();
                    eprintln!("  {} {}{n}: {} ({})", r.experiment, r.statistic, r.value, r.verdict);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
