use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use deceptive_nes::commands::{self, parse_delta, parse_grid};
use deceptive_nes::output::{self, ERROR_FILE};
use deceptive_nes::scenario::ModelSpec;
use deceptive_nes::{load_scenario, CliError, CommandKind, Grid, Options};
use serde::Serialize;

/// Oligopoly Nash equilibrium seeking with deceptive dithering.
#[derive(Debug, Parser)]
#[command(name = "deceptive-nes", version)]
struct Cli {
    command: CommandKind,

    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,

    /// Deceptive gains, comma separated in deceiver order.
    #[arg(long, value_parser = |s: &str| parse_delta(s).map(DeltaList), allow_hyphen_values = true)]
    delta: Option<DeltaList>,

    /// Grid `lo:hi:step` over the single deceptive gain.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    delta_grid: Option<Grid>,

    /// Override the scenario's simulation model.
    #[arg(long, value_enum)]
    model: Option<ModelSpec>,

    /// Override the scenario's frequency scale.
    #[arg(long)]
    freq_scale: Option<f64>,
}

/// One `--delta` value holding the whole comma separated list.
#[derive(Debug, Clone)]
struct DeltaList(Vec<f64>);

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn report(err: &CliError, out: &Path) -> ExitCode {
    let code = err.exit_code();
    let body = ErrorReport {
        error: err.kind(),
        message: err.to_string(),
        exit_code: code,
    };
    let json = serde_json::to_string(&body).expect("error report serializes");
    eprintln!("{json}");
    if fs::create_dir_all(out).is_ok() {
        let _ = output::write_json(out, ERROR_FILE, &body);
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        delta: cli.delta.map(|d| d.0),
        delta_grid: cli.delta_grid,
        model: cli.model,
        freq_scale: cli.freq_scale,
    };
    let result = load_scenario(&cli.scenario)
        .map_err(CliError::from)
        .and_then(|scenario| {
            fs::create_dir_all(&cli.out).map_err(|source| {
                CliError::Write(output::WriteError {
                    path: cli.out.clone(),
                    source,
                })
            })?;
            commands::dispatch(cli.command, &scenario, &opts, &cli.out)
        });
    match result {
        Ok(files) => {
            let stale = cli.out.join(ERROR_FILE);
            if stale.exists() {
                let _ = fs::remove_file(stale);
            }
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(&e, &cli.out),
    }
}
