//! `nlb`: bounds, estimators, lemma suites and protocol simulation for
//! discriminating orthonormal product bases with LOCC.
//!
//! Exit codes: 0 success, 1 a check found a violation, 2 bad input.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nonlocality::rng::DEFAULT_SEED;

#[derive(Parser, Debug)]
#[command(name = "nlb", version, about = "Nonlocality bounds for product-basis discrimination")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "NL_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rigidity constants and error-probability bounds for the three families.
    Table1(commands::Table1Args),
    /// Run the randomized lemma suites.
    Verify(commands::VerifyArgs),
    /// Bracket the nonlocality constant of a basis from above.
    Eta(commands::EtaArgs),
    /// Certified lower bounds for a recognized basis.
    Certify(commands::CertifyArgs),
    /// Analyze a tiling file or enumerate domino tilings.
    Tiling(commands::TilingArgs),
    /// Evaluate an LOCC protocol tree on a basis.
    Simulate(commands::SimulateArgs),
}

#[derive(Serialize)]
struct ResolvedConfig<'a, A: Serialize> {
    command: &'a str,
    seed: u64,
    format: Format,
    threads: usize,
    output: &'a Option<PathBuf>,
    args: &'a A,
}

pub enum Status {
    Ok,
    Violation,
}

pub struct Report {
    pub body: serde_json::Value,
    pub table: render::Table,
    pub status: Status,
}

fn dispatch(cli: &Cli) -> anyhow::Result<(serde_json::Value, Report)> {
    fn config<A: Serialize>(cli: &Cli, command: &str, args: &A) -> serde_json::Value {
        serde_json::to_value(ResolvedConfig {
            command,
            seed: cli.seed,
            format: cli.format,
            threads: cli.threads,
            output: &cli.output,
            args,
        })
        .expect("config serializes")
    }
    Ok(match &cli.command {
        Command::Table1(a) => (config(cli, "table1", a), commands::table1(a)?),
        Command::Verify(a) => (config(cli, "verify", a), commands::verify(a, cli.seed)?),
        Command::Eta(a) => (config(cli, "eta", a), commands::eta(a, cli.seed)?),
        Command::Certify(a) => (config(cli, "certify", a), commands::certify(a)?),
        Command::Tiling(a) => (config(cli, "tiling", a), commands::tiling(a)?),
        Command::Simulate(a) => (config(cli, "simulate", a), commands::simulate(a)?),
    })
}

fn emit(cli: &Cli, config: serde_json::Value, report: &Report) -> anyhow::Result<()> {
    let text = match cli.format {
        Format::Json => {
            let doc = serde_json::json!({ "config": config, "result": report.body });
            serde_json::to_string_pretty(&doc)? + "\n"
        }
        Format::Csv => render::csv(&config, &report.table),
        Format::Pretty => {
            let doc = serde_json::json!({ "config": config, "result": report.body });
            render::pretty(&doc)
        }
    };
    match &cli.output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let outcome = dispatch(&cli).and_then(|(config, report)| {
        emit(&cli, config, &report)?;
        Ok(report.status)
    });
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
