//! `stlf`: run the hybrid load forecaster and its ablations from a TOML
//! configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use stlf_core::experiment::commands;
use stlf_core::experiment::{DataSource, ExperimentConfig};

#[derive(Parser)]
#[command(name = "stlf", version, about = "Hybrid short-term load forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding `seed` in the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding `output` in the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit submodels and ensembles, then write scores, forecasts and models.
    Run(Common),
    /// Bias–variance decomposition, bagging sweep and boosting curves.
    BiasVariance(Common),
    /// LSTM under the six calendar-input configurations.
    AblateLstmInputs(Common),
    /// Write the configured series as `load.csv` and `holidays.txt`.
    SynthData(Common),
    /// Forecast the test windows with models saved by `run`.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Directory holding the model files (`<run>/models`).
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
    },
    /// Score forecast files against the configured test windows.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding `{model}_test.csv` files.
        #[arg(long, value_name = "DIR")]
        predictions: PathBuf,
    },
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn announce(what: &str, out: &Path) {
    eprintln!("{what}: wrote {}", out.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = c.resolve()?;
            let result = commands::cmd_run(&cfg, &out)?;
            for s in &result.scores {
                eprintln!("{:<12} test MAPE {:.4}", s.name, s.test.mape);
            }
            announce("run", &out);
        }
        Command::BiasVariance(c) => {
            let (cfg, out) = c.resolve()?;
            commands::cmd_bias_variance(&cfg, &out)?;
            announce("bias-variance", &out);
        }
        Command::AblateLstmInputs(c) => {
            let (cfg, out) = c.resolve()?;
            commands::cmd_ablate_lstm_inputs(&cfg, &out)?;
            announce("ablate-lstm-inputs", &out);
        }
        Command::SynthData(c) => {
            let (mut cfg, out) = c.resolve()?;
            cfg.data.source.get_or_insert(DataSource::Synthetic);
            commands::cmd_synth_data(&cfg, &out)?;
            announce("synth-data", &out);
        }
        Command::Predict { common, models } => {
            let (cfg, out) = common.resolve()?;
            commands::cmd_predict(&cfg, &models, &out)?;
            announce("predict", &out);
        }
        Command::Evaluate { common, predictions } => {
            let (cfg, out) = common.resolve()?;
            for (name, r) in commands::cmd_evaluate(&cfg, &predictions, &out)? {
                eprintln!("{name:<12} test MAPE {:.4}", r.mape);
            }
            announce("evaluate", &out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
