use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

mod args;
mod commands;

use args::{CompareArgs, EmpiricalArgs, GmArgs, PosteriorArgs};

#[derive(Parser)]
#[command(name = "kherd", version, about = "Kernel herding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuous herding on a Gaussian mixture.
    GmHerd(GmArgs),
    /// Discrete herding over the rows of a CSV file.
    EmpiricalHerd(EmpiricalArgs),
    /// Herding vs iid error traces for moments and sin‖x‖.
    Compare(CompareArgs),
    /// Logistic-regression posterior compression.
    Posterior(PosteriorArgs),
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: serde_json::Value,
    seed: Option<u64>,
    artifacts: Vec<PathBuf>,
    duration_secs: f64,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Outcome of a command: resolved config, seed and written files.
pub struct Outcome {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub artifacts: Vec<PathBuf>,
}

fn exit_code(e: &kherd::Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn write_manifest(out: &Path, manifest: &RunManifest) {
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("kherd: cannot create {}: {e}", out.display());
        return;
    }
    if let Err(e) = kherd::io::write_json(&out.join("run_manifest.json"), manifest) {
        eprintln!("kherd: cannot write run manifest: {e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let (name, out, result) = match cli.command {
        Command::GmHerd(a) => ("gm-herd", a.out_dir(), commands::gm_herd(a)),
        Command::EmpiricalHerd(a) => ("empirical-herd", a.out_dir(), commands::empirical_herd(a)),
        Command::Compare(a) => ("compare", a.out_dir(), commands::compare(a)),
        Command::Posterior(a) => ("posterior", a.out_dir(), commands::posterior(a)),
    };
    let duration_secs = started.elapsed().as_secs_f64();
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err((partial, e)) => (partial, Some(e)),
    };
    let manifest = RunManifest {
        command: name,
        config: outcome.config,
        seed: outcome.seed,
        artifacts: outcome.artifacts,
        duration_secs,
        version: env!("CARGO_PKG_VERSION"),
        error: error.as_ref().map(|e| e.to_string()),
    };
    write_manifest(&out, &manifest);
    match error {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("kherd {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
