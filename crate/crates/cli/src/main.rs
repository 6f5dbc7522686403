use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod analyze;
mod evolve;
mod manifest;
mod verify;

/// Quantum extensions of zero-temperature Glauber dynamics on a periodic
/// Ising chain.
#[derive(Debug, Parser)]
#[command(name = "qglauber", version)]
struct Cli {
    /// Cap on worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a channel is CPTP and extends the classical rule
    Verify(ChannelArgs),
    /// Write the X matrix, both Kraus operators and the classical transition matrix as CSV
    ExportChannel {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, env = "QGLAUBER_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Evolve the zero-magnetization ensemble and write observable time series
    Evolve(evolve::EvolveArgs),
    /// Hamming-class grids of ρ at 1 MCS and at the P_eq half time
    Classify(analyze::ClassifyArgs),
    /// Finite-size-scaling fit of coherence curves
    Fit(analyze::FitArgs),
    /// Crossover time between the short- and long-time laws
    Crossover(analyze::CrossoverArgs),
    /// Power-law exponent of a domain-wall series
    PowerLaw(analyze::PowerLawArgs),
}

#[derive(Debug, Clone, Args)]
struct ChannelArgs {
    /// Named variant; all six are checked when neither this nor --x-file is given
    #[arg(long, conflicts_with = "x_file")]
    variant: Option<String>,
    /// Real 4×4 X matrix as CSV
    #[arg(long)]
    x_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Exact,
    Traj,
    Classical,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Exact => "exact",
            RunMode::Traj => "traj",
            RunMode::Classical => "classical",
        }
    }
}

/// Outcome of a command that completed without error.
pub enum Status {
    Ok,
    Failed,
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    if let Some(t) = cli.threads {
        if t == 0 {
            anyhow::bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    match cli.command {
        Command::Verify(c) => verify::cmd_verify(c.variant.as_deref(), c.x_file.as_deref()),
        Command::ExportChannel { channel, out } => {
            verify::cmd_export(channel.variant.as_deref(), channel.x_file.as_deref(), &out)
        }
        Command::Evolve(a) => evolve::cmd_evolve(a),
        Command::Classify(a) => analyze::cmd_classify(a),
        Command::Fit(a) => analyze::cmd_fit(a),
        Command::Crossover(a) => analyze::cmd_crossover(a),
        Command::PowerLaw(a) => analyze::cmd_power_law(a),
    }
}

/// 0 on success, 1 when a check fails, 2 for usage errors and bad inputs.
fn exit_code(result: anyhow::Result<Status>) -> u8 {
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::Failed) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(exit_code(run(Cli::parse())))
}
