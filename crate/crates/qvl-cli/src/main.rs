use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use qvl_cli::generate::generate;
use qvl_cli::report::{merge, to_json};
use qvl_cli::run::{run_file, RunOptions};

#[derive(Parser)]
#[command(name = "qvl", version, about = "Verification runs for Q-valued maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory (overrides the scenario's own).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Seed for the randomized suites.
        #[arg(long)]
        seed: Option<u64>,
        /// Multiply every tolerance by this factor.
        #[arg(long, value_name = "S")]
        tol_scale: Option<f64>,
    },
    /// Sample a field family and write it as a field file.
    Generate {
        family: String,
        /// JSON object with `domain` and the family parameters, or `@file`.
        #[arg(long)]
        params: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Merge the suite reports of an output directory onto stdout.
    Report {
        #[arg(long, value_name = "DIR")]
        merge: PathBuf,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("QVL_THREADS") {
        let n: usize = v.parse().map_err(|_| format!("QVL_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            return Err("QVL_THREADS must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = threads() {
        return usage(e);
    }
    match cli.command {
        Command::Run { scenario, out, seed, tol_scale } => match run_file(&scenario, &RunOptions { out, seed, tol_scale }) {
            Ok(o) => {
                for (s, pass) in &o.manifest.suites {
                    println!("{} {s}", if *pass { "PASS" } else { "FAIL" });
                }
                for f in &o.manifest.failures {
                    eprintln!("failed: {} / {}", f.suite, f.assertion.name);
                }
                println!("reports in {}", o.out_dir.display());
                ExitCode::from(o.exit_code() as u8)
            }
            Err(e) => usage(e),
        },
        Command::Generate { family, params, out } => {
            let text = match params.strip_prefix('@') {
                Some(path) => match std::fs::read_to_string(path) {
                    Ok(t) => t,
                    Err(e) => return usage(format!("cannot read {path}: {e}")),
                },
                None => params,
            };
            let params: Value = match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(e) => return usage(format!("--params is not JSON: {e}")),
            };
            match generate(&family, &params) {
                Ok((field, meta)) => match field.write_json(&out, meta) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(1)
                    }
                },
                Err(e) => usage(e),
            }
        }
        Command::Report { merge: dir } => match merge(&dir) {
            Ok(m) => {
                print!("{}", to_json(&m));
                if m.pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => usage(e),
        },
    }
}
