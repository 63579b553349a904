//! `bec-octrl`: simulate condensate dynamics or optimize control waveforms
//! from a configuration file.

mod config;
mod expr;
mod run;

use clap::{Parser, Subcommand};
use config::RunConfig;
use run::RunError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bec-octrl", version, about = "Condensate dynamics and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the initial state with the initial-guess control.
    Simulate {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Minimize the configured cost over the control timeline.
    Optimize {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Compare adjoint and finite-difference directional derivatives first.
        #[arg(long)]
        check: bool,
        /// Override the configured iteration limit.
        #[arg(long)]
        iters: Option<usize>,
    },
}

fn load(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| RunError::Config(e.0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out } => load(config).and_then(|cfg| run::simulate(&cfg, out)).map(|s| (s, 0)),
        Command::Optimize {
            config,
            out,
            check,
            iters,
        } => load(config)
            .and_then(|cfg| run::optimize(&cfg, out, *check, *iters))
            .map(|o| {
                let code = if o.status == bec_octrl::optim::Status::LineSearchFailed { 4 } else { 0 };
                (o.summary, code)
            }),
    };
    match result {
        Ok((summary, code)) => {
            print!("{summary}");
            if code == 4 {
                eprintln!("line search failed; artifacts written for the last accepted control");
            }
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("bec-octrl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
