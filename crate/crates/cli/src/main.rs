use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use csht_cli::commands::{cmd_discover, cmd_evaluate, cmd_generate, cmd_predict, cmd_train};
use csht_cli::config::defaults_help;
use csht_cli::{CliError, RunConfig};
use csht_core::Task;

#[derive(Parser)]
#[command(name = "csht", version, about = "Granger-causal hypergraph discovery and spherical attention forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a planted synthetic panel and its ground-truth edge list.
    #[command(after_help = defaults_help())]
    Generate(Common),
    /// Fit the causal hypergraph schedule and write its summary.
    #[command(after_help = defaults_help())]
    Discover(Common),
    /// Train one model per seed and write checkpoints and training logs.
    #[command(after_help = defaults_help())]
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Score every seed's checkpoint on the test split.
    #[command(after_help = defaults_help())]
    Evaluate(Common),
    /// Forecast the next day and report an asset's attention.
    #[command(after_help = defaults_help())]
    Predict {
        #[command(flatten)]
        common: Common,
        /// Forecast origin: the close of this date (YYYY-MM-DD).
        #[arg(long)]
        date: NaiveDate,
        /// Asset whose attention is reported [default: first asset]
        #[arg(long)]
        asset: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration [default: built-in defaults listed below]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list [default: seeds = [0, 1, 2, 3, 4]]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: csht_out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelFlags {
    /// Prediction task [default: regression]
    #[arg(long)]
    task: Option<Task>,
    /// Let every token attend to every token in its window [default: causal mask on]
    #[arg(long)]
    no_causal_mask: bool,
    /// Scaled dot-product attention instead of angular scores [default: spherical, lambda = 10]
    #[arg(long)]
    no_spherical: bool,
    /// Stdev of Gaussian noise on sentiment and news inputs while training [default: 0]
    #[arg(long)]
    input_noise: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

impl ModelFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(task) = self.task {
            cfg.model.task = task.to_string();
        }
        if self.no_causal_mask {
            cfg.model.use_causal_mask = false;
        }
        if self.no_spherical {
            cfg.model.use_spherical_attention = false;
        }
        if let Some(sigma) = self.input_noise {
            cfg.model.input_noise = sigma;
        }
        cfg.validate()
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Generate(c) => cmd_generate(&c.resolve()?),
        Command::Discover(c) => cmd_discover(&c.resolve()?),
        Command::Train { common, model } => {
            let mut cfg = common.resolve()?;
            model.apply(&mut cfg)?;
            cmd_train(&cfg)
        }
        Command::Evaluate(c) => cmd_evaluate(&c.resolve()?),
        Command::Predict { common, date, asset } => cmd_predict(&common.resolve()?, date, asset.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("csht: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
