//! Config file layout and flag merging. Precedence is flags, then the file,
//! then built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use aqs_core::eval::{Strategy, HORIZONS};
use aqs_core::optim::LossKind;
use aqs_core::rnn::CellVariant;
use aqs_core::train::TrainConfig;
use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Longest interior gap repaired by interpolation, in hours.
    pub max_gap_hours: usize,
    pub val_fraction: f64,
    pub holidays: Option<PathBuf>,
    /// Numeric inputs; defaults to the target plus every covariate column.
    pub features: Option<Vec<String>>,
    pub drop_features: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            max_gap_hours: 5,
            val_fraction: 0.2,
            holidays: None,
            features: None,
            drop_features: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    pub depths: Vec<usize>,
    pub losses: Vec<LossKind>,
    pub horizons: Vec<usize>,
    pub pretrain_end: Option<String>,
    pub test_start: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategies: vec![Strategy::Tf, Strategy::Joint],
            depths: vec![1, 2],
            losses: vec![LossKind::Mae, LossKind::Mse],
            horizons: HORIZONS.to_vec(),
            pretrain_end: None,
            test_start: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Clone, Debug, Default)]
pub struct LoadedConfig {
    pub config: FileConfig,
    /// Whether the file set `train.seed` explicitly.
    pub seed_in_file: bool,
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: FileConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let value: toml::Table = toml::from_str(&text)?;
    let seed_in_file = value
        .get("train")
        .and_then(|t| t.as_table())
        .is_some_and(|t| t.contains_key("seed"));
    Ok(LoadedConfig { config, seed_in_file })
}

/// Training hyperparameter flags. Unset flags fall back to the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// Maximum training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// ADAM learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Training loss: mae or mse [default: mae]
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Stacked LSTM layers, 1 = RNN, 2 = RNNs [default: 1]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Hidden units per layer [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Encoder length in hours [default: 24]
    #[arg(long)]
    pub t_enc: Option<usize>,
    /// Forecast horizon in hours [default: 8]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Cell variant: input-candidate or recurrent-candidate [default: input-candidate]
    #[arg(long)]
    pub variant: Option<CellVariant>,
    /// Global gradient-norm cap [default: 5]
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Early-stop patience in epochs, 0 disables [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Teacher forcing during training [default: true]
    #[arg(long)]
    pub teacher_forcing: Option<bool>,
}

impl TrainFlags {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { cfg.$f = v; })*};
        }
        set!(epochs, batch_size, learning_rate, loss, depth, hidden, t_enc, horizon, variant, clip_norm, patience, teacher_forcing);
    }
}

/// Data pipeline flags.
#[derive(Args, Clone, Debug, Default)]
pub struct DataFlags {
    /// Holiday file, one ISO date per line [default: none]
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    /// Longest gap repaired by interpolation, in hours [default: 5]
    #[arg(long)]
    pub max_gap: Option<usize>,
    /// Fraction of training windows held out for validation [default: 0.2]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Comma-separated numeric inputs [default: pm25_aqi plus every covariate]
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Comma-separated numeric inputs to remove [default: none]
    #[arg(long, value_delimiter = ',')]
    pub drop_features: Option<Vec<String>>,
}

impl DataFlags {
    pub fn apply(&self, cfg: &mut DataConfig) {
        if let Some(h) = &self.holidays {
            cfg.holidays = Some(h.clone());
        }
        if let Some(g) = self.max_gap {
            cfg.max_gap_hours = g;
        }
        if let Some(f) = self.val_fraction {
            cfg.val_fraction = f;
        }
        if let Some(f) = &self.features {
            cfg.features = Some(f.clone());
        }
        if let Some(d) = &self.drop_features {
            cfg.drop_features = d.clone();
        }
    }
}
