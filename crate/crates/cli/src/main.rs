use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ncgs::harness::{self, Algorithm, HarnessError, RunConfig, RunOverrides, Suite};
use ncgs::trace::{export_csv, ExportError};

#[derive(Parser)]
#[command(
    name = "ncgs",
    version,
    about = "Projection-free non-convex optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and write its JSONL trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// ncgs1, ncgs2, sncgs, ncgs-vr, fw or svfw
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Smoothness constant override.
        #[arg(long = "smoothness")]
        smoothness: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cadence: Option<usize>,
        /// Record wall-clock seconds in every row.
        #[arg(long)]
        timing: bool,
    },
    /// Project a JSONL trace onto the documented CSV columns.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an acceptance suite and print its pass/fail table.
    Verify {
        /// lemmas, rates, bounds or headtohead
        #[arg(long)]
        suite: String,
    },
}

fn fail(message: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn harness_failure(e: HarnessError) -> ExitCode {
    let code = e.exit_code() as u8;
    fail(e, code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            algo,
            horizon,
            smoothness,
            seed,
            out,
            cadence,
            timing,
        } => {
            let algorithm = match algo.as_deref().map(str::parse::<Algorithm>).transpose() {
                Ok(a) => a,
                Err(e) => return harness_failure(HarnessError::Schema(e)),
            };
            let overrides = RunOverrides {
                algorithm,
                horizon,
                smoothness,
                seed,
                out,
                cadence,
                timing: timing.then_some(true),
            };
            let result = RunConfig::load(&config).and_then(|mut cfg| {
                cfg.apply(&overrides)?;
                harness::run(&cfg)
            });
            match result {
                Ok(summary) => {
                    let f = &summary.footer;
                    println!(
                        "{}: output iter {} sq_grad_mapping {:.6e} (fo {} sfo {} ifo {} lo {})",
                        f.algorithm,
                        f.output_iter,
                        f.output_sq_grad_mapping,
                        f.fo,
                        f.sfo,
                        f.ifo,
                        f.lo
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => harness_failure(e),
            }
        }
        Command::Export { input, out } => {
            let reader = match File::open(&input) {
                Ok(f) => BufReader::new(f),
                Err(e) => return fail(format!("cannot read {}: {e}", input.display()), 10),
            };
            let writer = match File::create(&out) {
                Ok(f) => BufWriter::new(f),
                Err(e) => return fail(format!("cannot write {}: {e}", out.display()), 13),
            };
            match export_csv(reader, writer) {
                Ok(rows) => {
                    println!("{rows} rows written to {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e @ ExportError::Malformed { .. }) => fail(e, 11),
                Err(e) => fail(e, 13),
            }
        }
        Command::Verify { suite } => match suite.parse::<Suite>() {
            Ok(s) => {
                let report = harness::verify(s);
                println!("{report}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e, 11),
        },
    }
}
