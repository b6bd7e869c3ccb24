//! Mini-batch training with BPTT, transfer training, checkpoints and the
//! full-model gradient check.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{FeatureSpec, NormStats, WindowSample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::{self, AdamConfig, AdamState, LossKind};
use crate::rnn::CellVariant;
use crate::seq2seq::{Batch, Decoding, ModelDims, Seq2SeqModel, Seq2SeqParams};

/// Hyperparameters of one training run. Every field has a default, so a
/// config file may set any subset of keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Maximum number of passes over the training windows.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    /// Stacked LSTM layers in both encoder and decoder.
    pub depth: usize,
    pub hidden: usize,
    pub t_enc: usize,
    pub horizon: usize,
    pub variant: CellVariant,
    pub seed: u64,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Feed ground truth to the decoder during training.
    pub teacher_forcing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            loss: LossKind::Mae,
            depth: 1,
            hidden: 64,
            t_enc: 24,
            horizon: 8,
            variant: CellVariant::InputCandidate,
            seed: 0,
            clip_norm: 5.0,
            patience: 10,
            teacher_forcing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("depth", self.depth),
            ("hidden", self.hidden),
            ("t_enc", self.t_enc),
            ("horizon", self.horizon),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm must be positive, got {}", self.clip_norm)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.to_toml().as_bytes())
    }

    pub fn dims(&self, input: usize) -> ModelDims {
        ModelDims {
            input,
            hidden: self.hidden,
            depth: self.depth,
            t_enc: self.t_enc,
            horizon: self.horizon,
        }
    }

    /// Short label for the architecture depth: `RNN` (1) or `RNNs` (2+).
    pub fn depth_label(&self) -> &'static str {
        if self.depth > 1 {
            "RNNs"
        } else {
            "RNN"
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Seq2SeqModel,
    pub spec: FeatureSpec,
    pub history: Vec<EpochRecord>,
    /// Fingerprint of the checkpoint this one was transfer-trained from.
    pub base_fingerprint: Option<String>,
}

impl Checkpoint {
    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    /// History entry with the lowest validation loss (first on ties).
    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.history
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_loss <= r.val_loss => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_checkpoint(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode_checkpoint(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn check_windows(windows: &[WindowSample], dims: &ModelDims, what: &str) -> Result<()> {
    for w in windows {
        let (rows, cols) = w.encoder_block.shape();
        if cols != dims.input {
            return Err(Error::FeatureDim {
                expected: dims.input,
                found: cols,
            });
        }
        if w.target.len() != dims.horizon {
            return Err(Error::Horizon {
                checkpoint: dims.horizon,
                requested: w.target.len(),
            });
        }
        if rows != dims.t_enc {
            return Err(Error::InvalidArgument(format!(
                "{what} window has {rows} encoder rows, model expects {}",
                dims.t_enc
            )));
        }
    }
    Ok(())
}

/// Mean loss of `model` over `windows` in the given decoding mode, weighted
/// by the number of predicted values. Chunks run in parallel and are summed
/// in order.
pub fn mean_loss(model: &Seq2SeqModel, windows: &[WindowSample], kind: LossKind, decoding: Decoding) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Empty("no windows to evaluate".into()));
    }
    let parts: Vec<Result<(f64, usize)>> = windows
        .par_chunks(256)
        .map(|chunk| {
            let refs: Vec<&WindowSample> = chunk.iter().collect();
            let batch = Batch::from_windows(&refs)?;
            let pred = model.forward_batch(&batch, decoding)?;
            let (l, _) = optim::loss(kind, pred.as_slice(), batch.targets.as_slice())?;
            Ok((l, pred.len()))
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for p in parts {
        let (l, n) = p?;
        total += l * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

fn diverged(epoch: usize, batch: usize, loss: f64) -> Error {
    Error::Diverged { epoch, batch, loss }
}

/// One optimisation step on a batch; returns the batch loss.
fn train_step(
    model: &mut Seq2SeqModel,
    adam: &mut AdamState,
    batch: &Batch,
    config: &TrainConfig,
    epoch: usize,
    batch_idx: usize,
) -> Result<f64> {
    let decoding = if config.teacher_forcing {
        Decoding::TeacherForced
    } else {
        Decoding::Autoregressive
    };
    let non_finite = |e: Error| match e {
        Error::NonFinite(_) => diverged(epoch, batch_idx, f64::NAN),
        other => other,
    };
    let (pred, cache) = model.forward_cached(batch, decoding).map_err(non_finite)?;
    let (loss, grad) = optim::loss(config.loss, pred.as_slice(), batch.targets.as_slice()).map_err(non_finite)?;
    if !loss.is_finite() {
        return Err(diverged(epoch, batch_idx, loss));
    }
    let loss_grad = Matrix::new(pred.rows(), pred.cols(), grad).map_err(non_finite)?;
    let mut grads = model.backward(&cache, &loss_grad).map_err(non_finite)?;
    let variant = model.variant;
    {
        let mut g: Vec<&mut Matrix> = grads.trainable_mut(variant).into_iter().map(|(_, m)| m).collect();
        let norm = optim::clip_global_norm(&mut g, config.clip_norm)?;
        if !norm.is_finite() {
            return Err(diverged(epoch, batch_idx, loss));
        }
    }
    let g: Vec<&Matrix> = grads.trainable(variant).into_iter().map(|(_, m)| m).collect();
    let mut p: Vec<&mut Matrix> = model.params.trainable_mut(variant).into_iter().map(|(_, m)| m).collect();
    adam.step(&mut p, &g).map_err(non_finite)?;
    Ok(loss)
}

/// Runs the epoch loop from the current parameters with a fresh optimiser.
/// Returns the best-validation parameters and the full history.
fn fit(
    mut model: Seq2SeqModel,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    config: &TrainConfig,
) -> Result<(Seq2SeqModel, Vec<EpochRecord>)> {
    let val_windows = if val_windows.is_empty() {
        train_windows
    } else {
        val_windows
    };
    let adam_cfg = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = {
        let p: Vec<&Matrix> = model.params.trainable(model.variant).into_iter().map(|(_, m)| m).collect();
        AdamState::new(adam_cfg, &p)
    };
    // Separate stream from parameter initialisation.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut history = Vec::new();
    let mut best: Option<(f64, Seq2SeqModel)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&WindowSample> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let batch = Batch::from_windows(&refs)?;
            let loss = train_step(&mut model, &mut adam, &batch, config, epoch, b)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / train_windows.len() as f64;
        let val_loss = mean_loss(&model, val_windows, config.loss, Decoding::Autoregressive).map_err(|e| match e {
            Error::NonFinite(_) => diverged(epoch, 0, f64::NAN),
            other => other,
        })?;
        if !val_loss.is_finite() {
            return Err(diverged(epoch, 0, val_loss));
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    Ok((best.map_or(model, |(_, m)| m), history))
}

/// Trains a freshly initialised model. An empty validation set falls back
/// to the training windows.
pub fn train(
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    spec: &FeatureSpec,
    config: &TrainConfig,
) -> Result<Checkpoint> {
    config.validate()?;
    let first = train_windows
        .first()
        .ok_or_else(|| Error::Empty("no training windows".into()))?;
    let input = first.encoder_block.cols();
    if !spec.numeric.is_empty() && spec.dim() != input {
        return Err(Error::FeatureDim {
            expected: spec.dim(),
            found: input,
        });
    }
    let dims = config.dims(input);
    check_windows(train_windows, &dims, "training")?;
    check_windows(val_windows, &dims, "validation")?;
    let model = Seq2SeqModel::init(config.seed, dims, config.variant)?;
    let (model, history) = fit(model, train_windows, val_windows, config)?;
    Ok(Checkpoint {
        config: config.clone(),
        model,
        spec: spec.clone(),
        history,
        base_fingerprint: None,
    })
}

/// Continues training from `base` on new windows. Architecture fields of
/// `config` are taken from the base; the optimiser and epoch counter start
/// fresh.
pub fn transfer_train(
    base: &Checkpoint,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    config: &TrainConfig,
) -> Result<Checkpoint> {
    let mut config = config.clone();
    config.depth = base.config.depth;
    config.hidden = base.config.hidden;
    config.t_enc = base.config.t_enc;
    config.horizon = base.config.horizon;
    config.variant = base.config.variant;
    config.validate()?;
    if train_windows.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let dims = base.model.dims;
    check_windows(train_windows, &dims, "training")?;
    check_windows(val_windows, &dims, "validation")?;
    let (model, history) = fit(base.model.clone(), train_windows, val_windows, &config)?;
    Ok(Checkpoint {
        config,
        model,
        spec: base.spec.clone(),
        history,
        base_fingerprint: Some(base.fingerprint()),
    })
}

// ---------------------------------------------------------------------------
// Checkpoint format

const MAGIC: &[u8; 4] = b"AQS1";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}

fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.str(&ck.config.to_toml());
    w.str(&ck.fingerprint());
    match &ck.base_fingerprint {
        Some(f) => {
            w.u8(1);
            w.str(f);
        }
        None => w.u8(0),
    }

    let spec = &ck.spec;
    w.u32(spec.numeric.len());
    for n in &spec.numeric {
        w.str(n);
    }
    w.u32(spec.stats.len());
    for s in &spec.stats {
        w.f64(s.mean);
        w.f64(s.std);
    }
    match spec.target_stats {
        Some(s) => {
            w.u8(1);
            w.f64(s.mean);
            w.f64(s.std);
        }
        None => w.u8(0),
    }

    let d = &ck.model.dims;
    for v in [d.input, d.hidden, d.depth, d.t_enc, d.horizon] {
        w.u32(v);
    }
    w.str(ck.model.variant.as_str());
    let tensors = ck.model.params.named_tensors();
    w.u32(tensors.len());
    for (name, m) in tensors {
        w.str(&name);
        w.u32(m.rows());
        w.u32(m.cols());
        for &v in m.as_slice() {
            w.f64(v);
        }
    }

    w.u32(ck.history.len());
    for r in &ck.history {
        w.u32(r.epoch);
        w.f64(r.train_loss);
        w.f64(r.val_loss);
    }

    let body = w.0;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    out
}

fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes, not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let body = &bytes[HEADER_LEN..];
    if Sha256::digest(body).as_slice() != &bytes[8..HEADER_LEN] {
        return Err(Error::Checkpoint("content checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 0 };
    let config = TrainConfig::from_toml(&r.str()?)?;
    let fingerprint = r.str()?;
    if fingerprint != config.fingerprint() {
        return Err(Error::Checkpoint("config fingerprint does not match stored config".into()));
    }
    let base_fingerprint = match r.u8()? {
        0 => None,
        _ => Some(r.str()?),
    };

    let n = r.u32()?;
    let numeric = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let n = r.u32()?;
    let stats = (0..n)
        .map(|_| Ok(NormStats { mean: r.f64()?, std: r.f64()? }))
        .collect::<Result<Vec<_>>>()?;
    let target_stats = match r.u8()? {
        0 => None,
        _ => Some(NormStats { mean: r.f64()?, std: r.f64()? }),
    };
    let spec = FeatureSpec {
        numeric,
        stats,
        target_stats,
    };

    let dims = ModelDims {
        input: r.u32()?,
        hidden: r.u32()?,
        depth: r.u32()?,
        t_enc: r.u32()?,
        horizon: r.u32()?,
    };
    let variant: CellVariant = r.str()?.parse().map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
    let mut model = Seq2SeqModel::zeros(dims, variant)?;
    let count = r.u32()?;
    let mut loaded: std::collections::BTreeMap<String, Matrix> = std::collections::BTreeMap::new();
    for _ in 0..count {
        let name = r.str()?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        let values = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let m = Matrix::new(rows, cols, values).map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        if loaded.insert(name.clone(), m).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    for (name, slot) in model.params.named_tensors_mut() {
        let m = loaded
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if m.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                m.shape(),
                slot.shape()
            )));
        }
        *slot = m;
    }
    if let Some(extra) = loaded.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    model.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let n = r.u32()?;
    let history = (0..n)
        .map(|_| {
            Ok(EpochRecord {
                epoch: r.u32()?,
                train_loss: r.f64()?,
                val_loss: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after history".into()));
    }
    Ok(Checkpoint {
        config,
        model,
        spec,
        history,
        base_fingerprint,
    })
}

// ---------------------------------------------------------------------------
// Gradient check

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub dims: ModelDims,
    pub variant: CellVariant,
    pub loss: LossKind,
    pub decoding: Decoding,
    pub batch: usize,
    pub seed: u64,
    pub eps: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            dims: ModelDims {
                input: 3,
                hidden: 4,
                depth: 2,
                t_enc: 4,
                horizon: 2,
            },
            variant: CellVariant::InputCandidate,
            loss: LossKind::Mse,
            decoding: Decoding::TeacherForced,
            batch: 2,
            seed: 7,
            eps: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    /// Smallest |prediction − target| in the checked batch.
    pub min_residual: f64,
}

/// Relative error `|a − n| / max(|a|, |n|)`. Pairs where both magnitudes are
/// below `floor` are compared on absolute error scaled by `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Scale below which gradient entries are compared on absolute terms. A
/// central difference at `eps = 1e-5` on an O(1) loss carries roundoff near
/// `1e-16 / eps = 1e-11`, so entries under this scale cannot be resolved to
/// 1e-5 relative accuracy.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

/// Compares every trainable parameter gradient of a randomly initialised
/// model against central finite differences.
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut model = Seq2SeqModel::init(cfg.seed, cfg.dims, cfg.variant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    // Non-zero biases so every term of the backward pass is exercised.
    for (_, m) in model.params.trainable_mut(cfg.variant) {
        if m.cols() == 1 {
            m.as_mut_slice().iter_mut().for_each(|v| *v += 0.3 * normal.sample(&mut rng));
        }
    }
    let b = cfg.batch.max(1);
    let d = &cfg.dims;
    let mut sample = |rows: usize, cols: usize| {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| normal.sample(&mut rng)).collect()).expect("finite")
    };
    let x_seq: Vec<Matrix> = (0..d.t_enc).map(|_| sample(d.input, b)).collect();
    let y0 = sample(1, b);
    let mut targets = sample(d.horizon, b);

    // Keep every residual at least 1e-3 away from the MAE kink. Teacher
    // forcing makes predictions depend on targets, so iterate.
    let mut batch = Batch {
        x_seq,
        y0,
        targets: targets.clone(),
    };
    let mut min_residual = 0.0;
    for _ in 0..100 {
        batch.targets = targets.clone();
        let pred = model.forward_batch(&batch, cfg.decoding)?;
        min_residual = pred
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(p, t)| (p - t).abs())
            .fold(f64::INFINITY, f64::min);
        if min_residual >= 1e-3 {
            break;
        }
        targets = sample(d.horizon, b);
    }

    let loss_of = |m: &Seq2SeqModel| -> Result<f64> {
        let pred = m.forward_batch(&batch, cfg.decoding)?;
        Ok(optim::loss(cfg.loss, pred.as_slice(), batch.targets.as_slice())?.0)
    };
    let (pred, cache) = model.forward_cached(&batch, cfg.decoding)?;
    let (_, grad) = optim::loss(cfg.loss, pred.as_slice(), batch.targets.as_slice())?;
    let analytic = model.backward(&cache, &Matrix::new(pred.rows(), pred.cols(), grad)?)?;
    let analytic: Vec<(String, Matrix)> = analytic
        .trainable(cfg.variant)
        .into_iter()
        .map(|(n, m)| (n, m.clone()))
        .collect();

    let mut entries = Vec::new();
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        let mut entry = GradCheckEntry {
            name: name.clone(),
            count: grad.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for k in 0..grad.len() {
            let original = tensor_at(&mut model.params, cfg.variant, ti)[k];
            tensor_at(&mut model.params, cfg.variant, ti)[k] = original + cfg.eps;
            let plus = loss_of(&model)?;
            tensor_at(&mut model.params, cfg.variant, ti)[k] = original - cfg.eps;
            let minus = loss_of(&model)?;
            tensor_at(&mut model.params, cfg.variant, ti)[k] = original;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = grad.as_slice()[k];
            entry.max_abs_err = entry.max_abs_err.max((a - numeric).abs());
            entry.max_rel_err = entry.max_rel_err.max(relative_error(a, numeric, GRAD_CHECK_FLOOR));
        }
        entries.push(entry);
    }
    let max_rel_err = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_rel_err,
        min_residual,
    })
}

fn tensor_at(params: &mut Seq2SeqParams, variant: CellVariant, index: usize) -> &mut [f64] {
    params
        .trainable_mut(variant)
        .into_iter()
        .nth(index)
        .expect("tensor index in range")
        .1
        .as_mut_slice()
}
