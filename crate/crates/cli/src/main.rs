use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tdbcur_cli::{run_cli, Command};

#[derive(Parser)]
#[command(name = "tdbcur", version, about = "Low-rank implicit time integration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Low-rank run with time series, or an error-vs-rank table when the config has sweep ranks.
    Run(Args),
    /// Error-vs-step table and fitted convergence slopes.
    Sweep(Args),
    /// Low-rank and full-order runs side by side.
    Compare(Args),
    /// Full-order run only.
    Fom(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Model seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Compare(a) => (Command::Compare, a),
        Cmd::Fom(a) => (Command::Fom, a),
    };
    match run_cli(cmd, &args.config, args.out, args.seed, args.threads) {
        Ok(summary) => {
            for f in summary.files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
