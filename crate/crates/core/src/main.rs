use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use harris_regen::cli::{
    cmd_curve, cmd_estimate, cmd_matrices, cmd_report, cmd_simulate, cmd_verify, resolve_out_dir,
};
use harris_regen::Error;

#[derive(Parser)]
#[command(
    name = "harris-regen",
    about = "Regenerative simulation and bound verification for Harris-recurrent Markov processes",
    version
)]
struct Cli {
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker-pool size for replicated simulation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (default: $HARRIS_REGEN_OUT, then ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run cycles + replications and persist them under the output dir.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate C(f), K(f), B(f), m, Laplace and v* tables from a run.
    Estimate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the empirical-vs-bound deviation curve.
    Curve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        constants: PathBuf,
    },
    /// Run the statistical check suite over a completed run.
    Verify {},
    /// Print the stored verification summary.
    Report {},
    /// Export the transition matrix, resolvent and stationary measure as CSV.
    Matrices {
        #[arg(long)]
        config: PathBuf,
        /// Time for the transition-matrix export.
        #[arg(long, default_value_t = 1.0)]
        time: f64,
    },
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Some(n) = cli.workers {
        // Later installs are ignored; first one wins, which is fine for a
        // single-invocation CLI.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = resolve_out_dir(cli.out);
    match cli.command {
        Command::Simulate { config } => cmd_simulate(&config, &out, cli.seed).map(|()| true),
        Command::Estimate { config } => cmd_estimate(&config, &out, cli.seed).map(|()| true),
        Command::Curve { config, constants } => {
            cmd_curve(&config, &constants, &out, cli.seed).map(|()| true)
        }
        Command::Verify {} => cmd_verify(&out),
        Command::Report {} => cmd_report(&out).map(|()| true),
        Command::Matrices { config, time } => cmd_matrices(&config, &out, time).map(|()| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
