//! `aqs`: synthetic data, preparation, training, transfer, prediction,
//! evaluation, experiment grids and gradient checks for the seq2seq PM2.5
//! forecaster.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{DataFlags, TrainFlags};

#[derive(Parser, Debug)]
#[command(name = "aqs", version, about = "Sequence-to-sequence LSTM forecasting of hourly PM2.5 AQI")]
pub struct Cli {
    /// TOML config file with [train], [data] and [experiment] tables [default: none]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; required by train and experiment [default: none]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log more (-v info, -vv debug) [default: warnings only]
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Seasonal series with an upstream-pulse covariate
    Default,
    /// First half default profile, second half a shifted regime
    TwoRegime,
    /// Seasonal series without the upstream covariate
    NoUpstream,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecodingArg {
    Tf,
    Ar,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic hourly dataset (data.csv)
    Synth {
        /// Number of hourly rows
        #[arg(long, default_value_t = 8760)]
        hours: usize,
        /// Series profile
        #[arg(long, value_enum, default_value_t = Profile::Default)]
        profile: Profile,
        /// Station identifier
        #[arg(long, default_value = "synth-01")]
        station: String,
        /// Noise standard deviation in AQI units
        #[arg(long, default_value_t = 3.0)]
        noise: f64,
    },
    /// Load, join and repair CSV inputs (prepared.csv plus reports)
    Prepare {
        /// Input CSV with timestamp, station_id, pm25_aqi (repeatable)
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Covariate CSV joined on (station_id, timestamp) [default: none]
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Train a model from scratch (model.ckpt, history.csv)
    Train {
        /// Training CSV
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        data_flags: DataFlags,
    },
    /// Continue training a checkpoint on new data (model.ckpt, history.csv)
    Transfer {
        /// Checkpoint to start from
        #[arg(long)]
        base: PathBuf,
        /// New training CSV
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        data_flags: DataFlags,
    },
    /// Forecast the hours after the latest complete window (forecast.csv)
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        data_flags: DataFlags,
    },
    /// Score a checkpoint on test data (metrics.csv, plot CSV, summary.txt)
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Horizon to evaluate [default: the checkpoint's]
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        data_flags: DataFlags,
    },
    /// Train and score the strategy x depth x loss x horizon grid
    Experiment {
        /// Dataset CSV covering training and test periods
        #[arg(long)]
        data: PathBuf,
        /// First test hour; earlier rows are training data [default: experiment.test_start from --config]
        #[arg(long)]
        test_start: Option<String>,
        /// End of the pre-training period, required by the tf strategy [default: none]
        #[arg(long)]
        pretrain_end: Option<String>,
        /// Comma-separated strategies: tf, joint [default: tf,joint]
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        /// Comma-separated depths [default: 1,2]
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        /// Comma-separated losses [default: mae,mse]
        #[arg(long, value_delimiter = ',')]
        losses: Option<Vec<String>>,
        /// Comma-separated horizons [default: 8,12,16,20,24]
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        data_flags: DataFlags,
    },
    /// Compare analytic and finite-difference gradients (gradcheck.csv)
    Gradcheck {
        /// Input features
        #[arg(long, default_value_t = 3)]
        input: usize,
        /// Hidden units
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        /// Layers
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Encoder length
        #[arg(long, default_value_t = 4)]
        t_enc: usize,
        /// Horizon
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        /// Windows per batch
        #[arg(long, default_value_t = 2)]
        batch: usize,
        /// Cell variant [default: both]
        #[arg(long)]
        variant: Option<aqs_core::rnn::CellVariant>,
        /// Loss [default: both]
        #[arg(long)]
        loss: Option<aqs_core::optim::LossKind>,
        /// Decoding mode [default: both]
        #[arg(long, value_enum)]
        decoding: Option<DecodingArg>,
        /// Largest accepted relative error
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
}

/// Invalid invocation detected after argument parsing; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
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

    #[test]
    fn every_optional_flag_shows_a_default() {
        let mut root = Cli::command();
        root.build();
        for sub in root.get_subcommands() {
            let help = sub.clone().render_long_help().to_string();
            for arg in sub.get_arguments() {
                let id = arg.get_id().as_str();
                if arg.is_required_set() || matches!(id, "help" | "version") {
                    continue;
                }
                let long = arg.get_long().unwrap_or(id);
                // The flag's help runs until the next line that starts a flag.
                let lines: Vec<&str> = help.lines().collect();
                let starts_flag = |l: &str| {
                    let t = l.trim_start();
                    t.starts_with("--") || (t.starts_with('-') && t.contains(", --"))
                };
                let start = lines
                    .iter()
                    .position(|l| starts_flag(l) && l.contains(&format!("--{long}")))
                    .unwrap_or_else(|| panic!("--{long} missing from help"));
                let end = lines[start + 1..]
                    .iter()
                    .position(|l| starts_flag(l))
                    .map_or(lines.len(), |i| start + 1 + i);
                let line_has_default = lines[start..end].iter().any(|l| l.contains("[default:"));
                assert!(line_has_default, "`{} --{long}` help has no default", sub.get_name());
            }
        }
    }

    #[test]
    fn help_lists_train_defaults() {
        let d = aqs_core::train::TrainConfig::default();
        let mut cmd = Cli::command();
        let help = cmd
            .find_subcommand_mut("train")
            .unwrap()
            .render_long_help()
            .to_string();
        for expected in [
            format!("[default: {}]", d.epochs),
            format!("[default: {}]", d.batch_size),
            format!("[default: {}]", d.learning_rate),
            format!("[default: {}]", d.hidden),
            format!("[default: {}]", d.t_enc),
            format!("[default: {}]", d.horizon),
            format!("[default: {}]", d.clip_norm),
            format!("[default: {}]", d.patience),
            format!("[default: {}]", d.variant.as_str()),
        ] {
            assert!(help.contains(&expected), "missing {expected}");
        }
    }
}
