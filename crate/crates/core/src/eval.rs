//! Horizon RMSE evaluation, the persistence baseline, experiment grids and
//! report files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, FeatureSpec, HourlyRecord, NormStats, StationTable, WindowSample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::LossKind;
use crate::seq2seq::{Batch, DecodeMode, Decoding};
use crate::train::{self, Checkpoint, TrainConfig};

/// Horizons reported by the full experiment grid.
pub const HORIZONS: [usize; 5] = [8, 12, 16, 20, 24];

/// Forecast of one window, in AQI units.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPrediction {
    pub station_id: String,
    /// Timestamp of each predicted hour.
    pub times: Vec<NaiveDateTime>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// RMSE pooled over every window and every decoded step.
    pub rmse: f64,
    /// RMSE of each decoded step across windows.
    pub per_step: Vec<f64>,
    pub predictions: Vec<WindowPrediction>,
}

impl Evaluation {
    /// Non-overlapping forecasts per station, greedily tiled in time order,
    /// flattened to `(timestamp, actual, predicted)` points.
    pub fn plot_series(&self) -> Vec<(NaiveDateTime, f64, f64)> {
        let mut out = Vec::new();
        let mut last: Option<(&str, NaiveDateTime)> = None;
        for p in &self.predictions {
            let fresh = match last {
                Some((station, end)) => station != p.station_id || p.times[0] > end,
                None => true,
            };
            if fresh {
                out.extend(
                    p.times
                        .iter()
                        .zip(p.actual.iter().zip(&p.predicted))
                        .map(|(t, (a, y))| (*t, *a, *y)),
                );
                last = Some((&p.station_id, *p.times.last().unwrap()));
            }
        }
        out
    }
}

/// Pooled and per-step RMSE over equally long prediction/target rows.
pub fn horizon_rmse(predicted: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let h = predicted
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("no predictions".into()))?;
    if predicted.len() != actual.len()
        || predicted.iter().chain(actual).any(|r| r.len() != h)
        || h == 0
    {
        return Err(Error::shape(
            "horizon_rmse",
            format!("{} rows of {h}", predicted.len()),
            format!("{} rows", actual.len()),
        ));
    }
    let mut step_sse = vec![0.0; h];
    for (p, a) in predicted.iter().zip(actual) {
        for k in 0..h {
            step_sse[k] += (p[k] - a[k]).powi(2);
        }
    }
    let n = predicted.len() as f64;
    let pooled = (step_sse.iter().sum::<f64>() / (n * h as f64)).sqrt();
    let per_step = step_sse.iter().map(|s| (s / n).sqrt()).collect();
    Ok((pooled, per_step))
}

fn evaluation_from(
    windows: &[WindowSample],
    predicted_norm: Vec<Vec<f64>>,
    stats: NormStats,
) -> Result<Evaluation> {
    let predicted: Vec<Vec<f64>> = predicted_norm
        .into_iter()
        .map(|p| p.into_iter().map(|v| stats.denormalize(v)).collect())
        .collect();
    let actual: Vec<Vec<f64>> = windows
        .iter()
        .map(|w| w.target.iter().map(|&v| stats.denormalize(v)).collect())
        .collect();
    let (rmse, per_step) = horizon_rmse(&predicted, &actual)?;
    let predictions = windows
        .iter()
        .zip(predicted.into_iter().zip(actual))
        .map(|(w, (p, a))| WindowPrediction {
            station_id: w.station_id.clone(),
            times: (0..w.target.len()).map(|k| w.target_time(k)).collect(),
            actual: a,
            predicted: p,
        })
        .collect();
    Ok(Evaluation {
        rmse,
        per_step,
        predictions,
    })
}

/// Autoregressive forecasts of a checkpoint on test windows, scored in AQI
/// units.
pub fn evaluate(ck: &Checkpoint, windows: &[WindowSample], horizon: usize) -> Result<Evaluation> {
    let dims = &ck.model.dims;
    if horizon != dims.horizon {
        return Err(Error::Horizon {
            checkpoint: dims.horizon,
            requested: horizon,
        });
    }
    if windows.is_empty() {
        return Err(Error::Empty("no test windows".into()));
    }
    for w in windows {
        if w.encoder_block.cols() != dims.input {
            return Err(Error::FeatureDim {
                expected: dims.input,
                found: w.encoder_block.cols(),
            });
        }
        if w.target.len() != horizon {
            return Err(Error::Horizon {
                checkpoint: dims.horizon,
                requested: w.target.len(),
            });
        }
        if w.encoder_block.rows() != dims.t_enc {
            return Err(Error::InvalidArgument(format!(
                "window has {} encoder rows, checkpoint expects {}",
                w.encoder_block.rows(),
                dims.t_enc
            )));
        }
    }
    let chunks: Vec<Result<Vec<Vec<f64>>>> = windows
        .par_chunks(256)
        .map(|chunk| {
            let refs: Vec<&WindowSample> = chunk.iter().collect();
            let batch = Batch::from_windows(&refs)?;
            let pred = ck.model.forward_batch(&batch, Decoding::Autoregressive)?;
            Ok((0..pred.cols()).map(|j| pred.col(j).into_vec()).collect())
        })
        .collect();
    let mut predicted = Vec::with_capacity(windows.len());
    for c in chunks {
        predicted.extend(c?);
    }
    evaluation_from(windows, predicted, ck.spec.target())
}

/// Repeats each window's last observed value over the horizon.
pub fn persistence_baseline(windows: &[WindowSample], horizon: usize, stats: NormStats) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(Error::Empty("no test windows".into()));
    }
    if let Some(w) = windows.iter().find(|w| w.target.len() != horizon) {
        return Err(Error::Horizon {
            checkpoint: w.target.len(),
            requested: horizon,
        });
    }
    let predicted = windows.iter().map(|w| vec![w.last_observed; horizon]).collect();
    evaluation_from(windows, predicted, stats)
}

/// Forecast issued after the last complete encoder block of a station.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub station_id: String,
    pub times: Vec<NaiveDateTime>,
    /// AQI units.
    pub values: Vec<f64>,
}

/// Forecasts the `horizon` hours after the most recent `t_enc` complete,
/// contiguous hours of every station.
pub fn forecast(ck: &Checkpoint, tables: &[StationTable]) -> Result<Vec<Forecast>> {
    let dims = &ck.model.dims;
    let stats = ck.spec.target();
    let mut out = Vec::new();
    for table in tables {
        let n = table.timestamps.len();
        let start = (dims.t_enc..=n).rev().map(|end| end - dims.t_enc).find(|&s| {
            (s..s + dims.t_enc).all(|i| {
                table.features[i].is_some()
                    && table.target[i].is_some()
                    && (i == s || table.timestamps[i] - table.timestamps[i - 1] == Duration::hours(1))
            })
        });
        let Some(s) = start else {
            log::warn!("station {}: no complete {}-hour block to forecast from", table.station_id, dims.t_enc);
            continue;
        };
        let x_seq: Vec<Matrix> = (s..s + dims.t_enc)
            .map(|i| Matrix::column(table.features[i].as_deref().unwrap()))
            .collect::<Result<_>>()?;
        if x_seq[0].rows() != dims.input {
            return Err(Error::FeatureDim {
                expected: dims.input,
                found: x_seq[0].rows(),
            });
        }
        let y0 = Matrix::new(1, 1, vec![table.target[s + dims.t_enc - 1].unwrap()])?;
        let enc = ck.model.encode(&x_seq)?;
        let preds = ck.model.decode(&enc, &y0, dims.horizon, &DecodeMode::Autoregressive)?;
        let last = table.timestamps[s + dims.t_enc - 1];
        out.push(Forecast {
            station_id: table.station_id.clone(),
            times: (1..=dims.horizon).map(|k| last + Duration::hours(k as i64)).collect(),
            values: preds.iter().map(|p| stats.denormalize(p.get(0, 0))).collect(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Experiment grid

/// `Tf`: pre-train on the first period, then transfer-train on the second.
/// `Joint`: train once on both periods together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Tf,
    Joint,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Tf => "TF",
            Strategy::Joint => "Joint",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tf" | "transfer" => Ok(Strategy::Tf),
            "joint" => Ok(Strategy::Joint),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}` (expected tf or joint)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Setting {
    pub strategy: Strategy,
    pub depth: usize,
    pub loss: LossKind,
}

impl Setting {
    /// e.g. `TF + RNN + MAE`, `Joint + RNNs + MSE`.
    pub fn label(&self) -> String {
        let depth = if self.depth > 1 { "RNNs" } else { "RNN" };
        format!("{} + {} + {}", self.strategy.label(), depth, self.loss.label())
    }

    fn slug(&self) -> String {
        self.label().to_ascii_lowercase().replace(" + ", "_")
    }
}

/// Hourly records plus the time boundaries that define training periods and
/// the test period.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub dataset_id: String,
    /// Gap-repaired records.
    pub records: Vec<HourlyRecord>,
    pub holidays: BTreeSet<NaiveDate>,
    /// Numeric inputs before any ablation; statistics are fitted here.
    pub spec: FeatureSpec,
    /// End of the first training period (exclusive). Required by `Tf`.
    pub pretrain_end: Option<NaiveDateTime>,
    /// Start of the test period. Everything earlier is training data.
    pub test_start: NaiveDateTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub strategies: Vec<Strategy>,
    pub depths: Vec<usize>,
    pub losses: Vec<LossKind>,
    pub horizons: Vec<usize>,
    /// Shared hyperparameters; depth, loss and horizon are set per cell.
    pub train: TrainConfig,
    pub val_fraction: f64,
    /// Numeric features removed before fitting and training.
    pub drop_features: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            strategies: vec![Strategy::Tf, Strategy::Joint],
            depths: vec![1, 2],
            losses: vec![LossKind::Mae, LossKind::Mse],
            horizons: HORIZONS.to_vec(),
            train: TrainConfig::default(),
            val_fraction: 0.2,
            drop_features: Vec::new(),
        }
    }
}

impl GridConfig {
    /// Row order: loss, then strategy, then depth.
    pub fn settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for &loss in &self.losses {
            for &strategy in &self.strategies {
                for &depth in &self.depths {
                    out.push(Setting { strategy, depth, loss });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseRow {
    pub label: String,
    /// One cell per horizon, AQI units.
    pub cells: Vec<f64>,
    /// Config fingerprint of the model behind each cell.
    pub fingerprints: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseTable {
    pub dataset_id: String,
    pub seed: u64,
    pub horizons: Vec<usize>,
    pub rows: Vec<RmseRow>,
    /// Persistence RMSE per horizon on the same test windows.
    pub persistence: Vec<f64>,
    pub dropped_features: Vec<String>,
    /// Echo of the shared training configuration.
    pub config_toml: String,
}

impl RmseTable {
    pub fn cell(&self, label: &str, horizon: usize) -> Option<f64> {
        let col = self.horizons.iter().position(|&h| h == horizon)?;
        self.rows.iter().find(|r| r.label == label).map(|r| r.cells[col])
    }
}

#[derive(Clone, Debug)]
pub struct GridResult {
    pub table: RmseTable,
    /// `(row label, horizon, evaluation)` in table order.
    pub evaluations: Vec<(String, usize, Evaluation)>,
}

/// Windows of one horizon, partitioned by the experiment's time boundaries.
/// Windows straddling a boundary are dropped.
#[derive(Clone, Debug, Default)]
pub struct PeriodWindows {
    pub first: Vec<WindowSample>,
    pub second: Vec<WindowSample>,
    /// Every window that ends before the test period.
    pub training: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

pub fn partition_windows(
    windows: Vec<WindowSample>,
    pretrain_end: Option<NaiveDateTime>,
    test_start: NaiveDateTime,
) -> PeriodWindows {
    let mut out = PeriodWindows::default();
    for w in windows {
        let end = w.target_time(w.target.len() - 1);
        if w.origin >= test_start {
            out.test.push(w);
        } else if end < test_start {
            if let Some(p) = pretrain_end {
                if end < p {
                    out.first.push(w.clone());
                } else if w.origin >= p {
                    out.second.push(w.clone());
                }
            }
            out.training.push(w);
        }
    }
    out
}

/// Fits normalization on training-period records only (`timestamp <
/// test_start`), after dropping ablated features.
pub fn fit_training_spec(data: &ExperimentData, drop: &[String]) -> Result<FeatureSpec> {
    let training: Vec<HourlyRecord> = data
        .records
        .iter()
        .filter(|r| r.timestamp < data.test_start)
        .cloned()
        .collect();
    let (spec, _) = data::fit_normalization(&training, &data.spec.without(drop))?;
    Ok(spec)
}

struct Prepared {
    spec: FeatureSpec,
    tables: Vec<StationTable>,
}

fn split(windows: Vec<WindowSample>, seed: u64, fraction: f64) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    if windows.len() < 2 {
        return Ok((windows, Vec::new()));
    }
    data::split_train_val(windows, seed, fraction)
}

fn run_cell(
    data: &ExperimentData,
    prepared: &Prepared,
    grid: &GridConfig,
    setting: Setting,
    horizon: usize,
) -> Result<(Checkpoint, Evaluation)> {
    let config = TrainConfig {
        depth: setting.depth,
        loss: setting.loss,
        horizon,
        ..grid.train.clone()
    };
    let windows = data::make_windows(&prepared.tables, config.t_enc, horizon)?;
    let periods = partition_windows(windows, data.pretrain_end, data.test_start);
    if periods.test.is_empty() {
        return Err(Error::Empty(format!("no test windows for horizon {horizon}")));
    }
    let seed = config.seed;
    let ck = match setting.strategy {
        Strategy::Joint => {
            if periods.training.is_empty() {
                return Err(Error::Empty(format!("no training windows for horizon {horizon}")));
            }
            let (tr, va) = split(periods.training, seed, grid.val_fraction)?;
            train::train(&tr, &va, &prepared.spec, &config)?
        }
        Strategy::Tf => {
            if periods.first.is_empty() || periods.second.is_empty() {
                return Err(Error::Empty(format!(
                    "transfer needs windows in both training periods for horizon {horizon} (found {} and {})",
                    periods.first.len(),
                    periods.second.len()
                )));
            }
            let (tr1, va1) = split(periods.first, seed, grid.val_fraction)?;
            let base = train::train(&tr1, &va1, &prepared.spec, &config)?;
            let (tr2, va2) = split(periods.second, seed, grid.val_fraction)?;
            train::transfer_train(&base, &tr2, &va2, &config)?
        }
    };
    let eval = evaluate(&ck, &periods.test, horizon)?;
    Ok((ck, eval))
}

/// Trains and evaluates one model per `(setting, horizon)` cell. Cells run
/// in parallel; results are assembled in fixed row and column order.
pub fn experiment_grid(data: &ExperimentData, grid: &GridConfig) -> Result<GridResult> {
    grid.train.validate()?;
    if grid.strategies.contains(&Strategy::Tf) && data.pretrain_end.is_none() {
        return Err(Error::InvalidArgument(
            "the TF strategy requires a two-period dataset (set a pre-training end)".into(),
        ));
    }
    if let Some(p) = data.pretrain_end {
        if p >= data.test_start {
            return Err(Error::InvalidArgument("pre-training period must end before the test period starts".into()));
        }
    }
    let settings = grid.settings();
    if settings.is_empty() || grid.horizons.is_empty() {
        return Err(Error::Empty("experiment grid has no cells".into()));
    }
    let spec = fit_training_spec(data, &grid.drop_features)?;
    let tables = data::build_features(&data.records, &spec, &data.holidays)?;
    let prepared = Prepared { spec, tables };

    let cells: Vec<(Setting, usize)> = settings
        .iter()
        .flat_map(|&s| grid.horizons.iter().map(move |&h| (s, h)))
        .collect();
    let results: Vec<Result<(Checkpoint, Evaluation)>> = cells
        .par_iter()
        .map(|&(s, h)| run_cell(data, &prepared, grid, s, h))
        .collect();

    let mut persistence = Vec::with_capacity(grid.horizons.len());
    for &h in &grid.horizons {
        let windows = data::make_windows(&prepared.tables, grid.train.t_enc, h)?;
        let test = partition_windows(windows, data.pretrain_end, data.test_start).test;
        persistence.push(persistence_baseline(&test, h, prepared.spec.target())?.rmse);
    }

    let mut rows: Vec<RmseRow> = settings
        .iter()
        .map(|s| RmseRow {
            label: s.label(),
            cells: Vec::new(),
            fingerprints: Vec::new(),
        })
        .collect();
    let mut evaluations = Vec::with_capacity(cells.len());
    for (i, ((setting, h), res)) in cells.iter().zip(results).enumerate() {
        let (ck, eval) = res?;
        let row = &mut rows[i / grid.horizons.len()];
        row.cells.push(eval.rmse);
        row.fingerprints.push(match &ck.base_fingerprint {
            Some(base) => format!("{} (base {base})", ck.fingerprint()),
            None => ck.fingerprint(),
        });
        evaluations.push((setting.label(), *h, eval));
    }
    Ok(GridResult {
        table: RmseTable {
            dataset_id: data.dataset_id.clone(),
            seed: grid.train.seed,
            horizons: grid.horizons.clone(),
            rows,
            persistence,
            dropped_features: grid.drop_features.clone(),
            config_toml: grid.train.to_toml(),
        },
        evaluations,
    })
}

// ---------------------------------------------------------------------------
// Reports

fn machine(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn render_table_csv(table: &RmseTable) -> String {
    let mut s = String::from("setting");
    for h in &table.horizons {
        let _ = write!(s, ",{h}h");
    }
    s.push('\n');
    for row in &table.rows {
        s.push_str(&row.label);
        for v in &row.cells {
            let _ = write!(s, ",{}", machine(*v));
        }
        s.push('\n');
    }
    s
}

pub fn render_summary(table: &RmseTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dataset: {}", table.dataset_id);
    let _ = writeln!(s, "seed: {}", table.seed);
    if !table.dropped_features.is_empty() {
        let _ = writeln!(s, "dropped features: {}", table.dropped_features.join(", "));
    }
    let _ = writeln!(s, "\nRMSE (AQI units, pooled over decoded steps)");
    for row in &table.rows {
        for (h, v) in table.horizons.iter().zip(&row.cells) {
            let _ = writeln!(s, "{}, {h}h, {v:.2}", row.label);
        }
    }
    for (h, v) in table.horizons.iter().zip(&table.persistence) {
        let _ = writeln!(s, "Persistence, {h}h, {v:.2}");
    }
    let _ = writeln!(s, "\nconfig fingerprints");
    for row in &table.rows {
        for (h, f) in table.horizons.iter().zip(&row.fingerprints) {
            let _ = writeln!(s, "{}, {h}h, {f}", row.label);
        }
    }
    let _ = writeln!(s, "\ntraining config\n{}", table.config_toml.trim_end());
    s
}

pub fn render_plot_csv(eval: &Evaluation) -> String {
    let mut s = String::from("timestamp,actual,predicted\n");
    for (t, a, p) in eval.plot_series() {
        let _ = writeln!(s, "{},{},{}", data::format_timestamp(&t), machine(a), machine(p));
    }
    s
}

/// Writes `rmse_table.csv`, `summary.txt` and one `plot_<setting>_<H>h.csv`
/// per evaluation into `out_dir`. Returns the written file names in order.
pub fn emit_report(table: &RmseTable, evaluations: &[(String, usize, Evaluation)], out_dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        write_file(&out_dir.join(&name), &body)?;
        written.push(name);
        Ok(())
    };
    put("rmse_table.csv".into(), render_table_csv(table))?;
    put("summary.txt".into(), render_summary(table))?;
    for (label, h, eval) in evaluations {
        let slug = label.to_ascii_lowercase().replace(" + ", "_");
        put(format!("plot_{slug}_{h}h.csv"), render_plot_csv(eval))?;
    }
    Ok(written)
}

/// Plot data file name for a setting and horizon.
pub fn plot_file_name(setting: &Setting, horizon: usize) -> String {
    format!("plot_{}_{horizon}h.csv", setting.slug())
}
