//! `localfloer`: runs germ scenarios and writes reports.

mod error;
mod plots;
mod runner;
mod scenario;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use localfloer_core::corpus::corpus_list;

use crate::error::CliError;
use crate::scenario::Scenario;

#[derive(Parser)]
#[command(name = "localfloer", version, about = "Iteration invariants of isolated fixed points of Hamiltonian germs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its reports.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; overrides the scenario's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for sampling checks; overrides the scenario's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the named germs.
    Corpus {
        #[arg(long)]
        json: bool,
    },
    /// Turn persistence and gap reports into columnar plot data.
    Plots {
        /// Report files or run directories.
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

/// `println!` that stops quietly when stdout is closed.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Run { scenario, out, seed, jobs } => {
            let text = std::fs::read_to_string(&scenario).map_err(CliError::io(format!("reading {}", scenario.display())))?;
            let mut sc = Scenario::parse(&text)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            let out = out.or_else(|| sc.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let summary = runner::run(&sc, &out, jobs)?;
            for c in &summary.checks {
                say!("{} {:<12} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.task, c.name, c.detail);
            }
            for e in &summary.errors {
                say!("ERROR {:<12} {}", e.task, e.error);
            }
            say!("summary written to {}", out.join("summary.json").display());
            Ok(if summary.passed { 0 } else { 1 })
        }
        Command::Corpus { json } => {
            if json {
                say!("{}", serde_json::to_string_pretty(corpus_list())?);
            } else {
                for e in corpus_list() {
                    let params: Vec<String> = e.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    say!("{:<26} dim {}  [{}]  {}", e.name, e.dim, params.join(", "), e.formula);
                }
            }
            Ok(0)
        }
        Command::Plots { reports, out } => {
            for p in plots::emit_plots(&reports, &out)? {
                say!("{}", p.display());
            }
            Ok(0)
        }
    }
}
