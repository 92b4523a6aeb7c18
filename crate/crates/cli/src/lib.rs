//! Experiment runner for `hessianscope`: trains a model, decomposes Hessians
//! along the trajectory and writes CSV (and optionally SVG) reports, all
//! driven by one TOML configuration file.

pub mod commands;
pub mod config;
pub mod error;
pub mod problem;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{Context, Options, Stage};
pub use config::{load, resolve, Resolved, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hessianscope", version, about = "Hessian spectrum analysis along training trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the model and save the checkpoint trajectory.
    Train(RunArgs),
    /// Extreme Hessian eigenpairs at selected checkpoints.
    Eigen(RunArgs),
    /// Curvature of fixed eigenvectors across the whole trajectory.
    Track(RunArgs),
    /// True loss against the quadratic model along each eigenvector.
    Probe(RunArgs),
    /// Quadratic fits of the loss along each eigenvector.
    Fit(RunArgs),
    /// Empirically optimal step size along each eigenvector.
    Linesearch(RunArgs),
    /// Best loss improvement along each eigenvector.
    Improve(RunArgs),
    /// Plain RMSProp against the negative-curvature alternation.
    Negcurve(RunArgs),
    /// Every stage in order.
    All(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a configuration key, e.g. `--set train.total_steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Leave the timestamp out of the trajectory manifest.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Maximum number of directions or solves processed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Train(a)
            | Command::Eigen(a)
            | Command::Track(a)
            | Command::Probe(a)
            | Command::Fit(a)
            | Command::Linesearch(a)
            | Command::Improve(a)
            | Command::Negcurve(a)
            | Command::All(a) => a,
        }
    }
}

/// Runs one command against an already built context.
pub fn execute(command: &Command, ctx: &Context) -> Result<(), CliError> {
    match command {
        Command::Train(_) => ctx.train().map(drop),
        Command::Eigen(_) => ctx.eigen().map(drop),
        Command::Track(_) => ctx.track(),
        Command::Probe(_) => ctx.probe(),
        Command::Fit(_) => ctx.fit(),
        Command::Linesearch(_) => ctx.linesearch(),
        Command::Improve(_) => ctx.improve(),
        Command::Negcurve(_) => ctx.negcurve(),
        Command::All(_) => ctx.all(),
    }
}

/// Loads the configuration named on the command line and runs the command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let args = cli.command.args();
    let resolved = load(&args.config, &args.overrides)?;
    let opts = Options { jobs: args.jobs.max(1), svg: args.svg, timestamp: !args.no_timestamp };
    let ctx = Context::new(resolved, opts)?;
    execute(&cli.command, &ctx)
}
