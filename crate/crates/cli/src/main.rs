use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fermatlab_cli::runner::{self, Axis, Options};

#[derive(Parser)]
#[command(
    name = "fermatlab",
    version,
    about = "Stationarity experiments for time functionals on quantum and classical paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Override the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the system and perturbation seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the variation engine.
    #[arg(long, env = "FERMATLAB_THREADS", default_value_t = 1)]
    threads: usize,
    /// Also write plot.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the experiment catalog with default configs.
    List,
    /// Run a config once per value of one axis and combine the results.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, e.g. 250,500,1000,2000.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        common: Common,
    },
}

fn options(c: Common) -> Options {
    Options { output_dir: c.output_dir, seed: c.seed, threads: c.threads, svg: c.svg }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { runner::EXIT_ERROR as u8 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { config, common } => runner::run(&config, &options(common)),
        Command::List => runner::list(),
        Command::Sweep { config, axis, values, common } => runner::sweep(&config, axis, &values, &options(common)),
    };
    ExitCode::from(code as u8)
}
