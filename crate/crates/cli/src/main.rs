mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use commands::Status;
use config::RunConfig;

const EXIT_PARTIAL: u8 = 1;
const EXIT_DISAGREEMENT: u8 = 2;
const EXIT_ERROR: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_CONFIG: u8 = 65;

#[derive(Parser, Debug)]
#[command(name = "torsionlab", version, about = "Analytic torsion and adiabatic-limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration with dotted keys; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "TORSIONLAB_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for grid evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Run a single report.
    #[arg(long, global = true)]
    only: Option<String>,

    /// Seed of the randomized algebra checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write base, fiber, product (and twisted) spectra as CSV.
    Spectrum,
    /// Evaluate circle and total-space torsion by both zeta methods.
    Torsion,
    /// Run the adiabatic-limit reports.
    Adiabatic,
    /// Run every acceptance report; exit 0 iff all pass.
    Verify,
}

fn run(cli: Cli) -> ExitCode {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) if !path.exists() => {
            eprintln!("error: config file {} not found\n", path.display());
            eprintln!("{}", Cli::command().render_usage());
            return ExitCode::from(EXIT_USAGE);
        }
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
    };
    if cli.only.is_some() {
        let verify = cli.command == Command::Verify;
        if let Err(e) = commands::tags(verify, cli.only.as_deref()) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    let out = cli
        .out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("torsionlab-out"));
    if let Err(e) = commands::prepare_output(&out) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_ERROR);
    }
    let resolved = cfg.to_toml().and_then(|text| {
        std::fs::write(out.join("config.toml"), text).map_err(|e| anyhow::anyhow!("writing config.toml: {e}"))
    });
    if let Err(e) = resolved {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_ERROR);
    }
    let result = match cli.command {
        Command::Spectrum => commands::cmd_spectrum(&cfg, &out).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            Status::Ok
        }),
        Command::Torsion => commands::cmd_torsion(&cfg, &out),
        Command::Adiabatic => commands::cmd_reports(&cfg, &out, false, cli.only.as_deref()),
        Command::Verify => commands::cmd_reports(&cfg, &out, true, cli.only.as_deref()),
    };
    match &result {
        Ok(Status::Ok) => {}
        Ok(Status::Failing(tags)) => eprintln!("failing reports: {}", tags.join(", ")),
        Ok(Status::Disagreement(msg)) => eprintln!("method disagreement: {msg}"),
        Err(e) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(exit_status(&result))
}

fn exit_status(result: &anyhow::Result<Status>) -> u8 {
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::Failing(_)) => EXIT_PARTIAL,
        Ok(Status::Disagreement(_)) => EXIT_DISAGREEMENT,
        Err(_) => EXIT_ERROR,
    }
}

fn main() -> ExitCode {
    run(Cli::parse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_statuses() {
        assert_eq!(exit_status(&Ok(Status::Ok)), 0);
        assert_eq!(exit_status(&Ok(Status::Failing(vec!["x".into()]))), 1);
        assert_eq!(exit_status(&Ok(Status::Disagreement("d".into()))), 2);
        assert_eq!(exit_status(&Err(anyhow::anyhow!("boom"))), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
