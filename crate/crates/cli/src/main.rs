use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

mod commands;
mod config;

use config::{parse_value, CliError, CliResult, Layers};

#[derive(Parser)]
#[command(name = "sparse-mcmc", version, about = "Low-temperature Metropolis chains for sparse PCA and sparse regression")]
struct Cli {
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted instance and write its header.
    Gen(Common),
    /// Run one chain (or best local search) and write its trace.
    Run(Common),
    /// Run a replicated parameter sweep and write CSV, JSON and plots.
    Sweep(Common),
    /// Exhaustive ascent-tree certificate on a small instance.
    Certify(Common),
    /// Overlap-shell profile (PCA) or bottleneck quantities (regression).
    Landscape(Common),
    /// Print signal or sample-size thresholds.
    Thresholds {
        #[command(flatten)]
        common: Common,
        /// Print the full threshold set as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Re-emit reports from a saved sweep result.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. `--set beta=inf`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed; falls back to RUN_SEED, then to the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    t: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Inverse temperature; `inf` for the greedy chain.
    #[arg(long)]
    beta: Option<String>,
}

impl Common {
    fn layers(&self) -> CliResult<Layers> {
        let mut flags: Vec<(String, Value)> = Vec::new();
        let mut add = |key: &str, value: Option<Value>| {
            if let Some(v) = value {
                flags.push((key.to_string(), v));
            }
        };
        add("seed", self.seed.map(Value::from));
        add("model", self.model.clone().map(Value::from));
        add("p", self.p.map(Value::from));
        add("k", self.k.map(Value::from));
        add("t", self.t.map(Value::from));
        add("n", self.n.map(Value::from));
        add("lambda", self.lambda.map(Value::from));
        add("sigma2", self.sigma2.map(Value::from));
        add("beta", self.beta.as_deref().map(parse_value));
        Layers::new(self.config.as_deref(), &self.sets, flags)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Failure(e.to_string()))?;
    }
    match cli.command {
        Command::Gen(c) => commands::gen(&c.layers()?, &c.out_or("out")),
        Command::Run(c) => commands::run(&c.layers()?, &c.out_or("out")),
        Command::Sweep(c) => commands::sweep(&c.layers()?, &c.out_or("out")),
        Command::Certify(c) => commands::certify(&c.layers()?, c.out.as_deref()),
        Command::Landscape(c) => commands::landscape(&c.layers()?, c.out.as_deref()),
        Command::Thresholds { common, json } => commands::thresholds(&common.layers()?, json),
        Command::Report(c) => commands::report(&c.layers()?, &c.out_or("out")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
