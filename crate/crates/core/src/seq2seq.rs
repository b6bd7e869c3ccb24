//! Encoder-decoder forecaster.
//!
//! The encoder runs a stacked LSTM over the `t_enc` feature vectors of a
//! window and reduces its top-layer hidden states to a context vector by
//! their arithmetic mean. The decoder is a second stack of the same depth,
//! started from the encoder's final states, that at every step reads
//! `[y_prev ; context]` and emits one scalar through a linear projection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::rnn::{
    glorot_bound, init_stack, stack_step, stacked_forward_cached, CellVariant, LstmParams,
    LstmState, StackBackward, StackRun, StepCache,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Feature dimension of each encoder input vector.
    pub input: usize,
    pub hidden: usize,
    /// Layers in each of the encoder and decoder stacks.
    pub depth: usize,
    pub t_enc: usize,
    pub horizon: usize,
}

impl ModelDims {
    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.depth == 0 || self.t_enc == 0 || self.horizon == 0
        {
            return Err(Error::InvalidArgument(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Every parameter tensor of the encoder-decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqParams {
    pub encoder: Vec<LstmParams>,
    pub decoder: Vec<LstmParams>,
    /// Output projection, `1×hidden`.
    pub w_hy: Matrix,
    /// Output bias, `1×1`.
    pub b_y: Matrix,
}

impl Seq2SeqParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        let n = dims.hidden;
        let stack = |input: usize| {
            (0..dims.depth)
                .map(|l| LstmParams::zeros(if l == 0 { input } else { n }, n))
                .collect()
        };
        Seq2SeqParams {
            encoder: stack(dims.input),
            decoder: stack(1 + n),
            w_hy: Matrix::zeros(1, n),
            b_y: Matrix::zeros(1, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |layers: &[LstmParams]| {
            layers
                .iter()
                .map(|p| LstmParams::zeros(p.input_size(), p.hidden_size()))
                .collect()
        };
        Seq2SeqParams {
            encoder: z(&self.encoder),
            decoder: z(&self.decoder),
            w_hy: self.w_hy.zeros_like(),
            b_y: self.b_y.zeros_like(),
        }
    }

    /// All tensors with stable names such as `encoder.0.w_xi`.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (prefix, stack) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, layer) in stack.iter().enumerate() {
                for (name, m) in layer.all_tensors() {
                    out.push((format!("{prefix}.{l}.{name}"), m));
                }
            }
        }
        out.push(("output.w_hy".into(), &self.w_hy));
        out.push(("output.b_y".into(), &self.b_y));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (prefix, stack) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (l, layer) in stack.iter_mut().enumerate() {
                for (name, m) in layer.all_tensors_mut() {
                    out.push((format!("{prefix}.{l}.{name}"), m));
                }
            }
        }
        out.push(("output.w_hy".into(), &mut self.w_hy));
        out.push(("output.b_y".into(), &mut self.b_y));
        out
    }

    fn is_trainable(name: &str, variant: CellVariant) -> bool {
        variant == CellVariant::RecurrentCandidate || !name.ends_with(".w_hg")
    }

    pub fn trainable(&self, variant: CellVariant) -> Vec<(String, &Matrix)> {
        self.named_tensors()
            .into_iter()
            .filter(|(n, _)| Self::is_trainable(n, variant))
            .collect()
    }

    pub fn trainable_mut(&mut self, variant: CellVariant) -> Vec<(String, &mut Matrix)> {
        self.named_tensors_mut()
            .into_iter()
            .filter(|(n, _)| Self::is_trainable(n, variant))
            .collect()
    }
}

/// Number of trainable tensors and scalars in a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCensus {
    pub tensors: usize,
    pub scalars: usize,
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// Top-layer hidden states `h_1..h_T`.
    pub hidden_seq: Vec<Matrix>,
    /// Elementwise mean of `hidden_seq`.
    pub context: Matrix,
    /// Final `(h, c)` of every encoder layer.
    pub final_states: Vec<LstmState>,
}

/// How the decoder obtains `y_prev` after the first step.
#[derive(Clone, Debug)]
pub enum DecodeMode {
    /// Feed back the decoder's own previous prediction.
    Autoregressive,
    /// Feed back ground truth. Row `k` of the matrix is the true value of
    /// step `k+1`; at least `horizon-1` rows, one column per batch entry.
    TeacherForced(Matrix),
}

/// Decoding policy for window-level calls, where teacher values come from
/// the windows' own targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decoding {
    Autoregressive,
    TeacherForced,
}

/// Encoder inputs, first previous value and targets of a batch of windows,
/// laid out column-per-window.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `t_enc` matrices of shape `input×batch`.
    pub x_seq: Vec<Matrix>,
    /// `1×batch`.
    pub y0: Matrix,
    /// `horizon×batch`.
    pub targets: Matrix,
}

impl Batch {
    pub fn from_windows(windows: &[&WindowSample]) -> Result<Batch> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Empty("batch of zero windows".into()))?;
        let (t_enc, d) = first.encoder_block.shape();
        let horizon = first.target.len();
        let b = windows.len();
        let mut x_seq = vec![vec![0.0; d * b]; t_enc];
        let mut y0 = vec![0.0; b];
        let mut targets = vec![0.0; horizon * b];
        for (j, w) in windows.iter().enumerate() {
            if w.encoder_block.shape() != (t_enc, d) || w.target.len() != horizon {
                return Err(Error::shape(
                    "Batch::from_windows",
                    format!("{t_enc}x{d} block, {horizon} targets"),
                    format!(
                        "{}x{} block, {} targets",
                        w.encoder_block.rows(),
                        w.encoder_block.cols(),
                        w.target.len()
                    ),
                ));
            }
            for (t, x) in x_seq.iter_mut().enumerate() {
                for (k, &v) in w.encoder_block.row_slice(t).iter().enumerate() {
                    x[k * b + j] = v;
                }
            }
            y0[j] = w.last_observed;
            for (k, &v) in w.target.iter().enumerate() {
                targets[k * b + j] = v;
            }
        }
        Ok(Batch {
            x_seq: x_seq
                .into_iter()
                .map(|v| Matrix::new(d, b, v))
                .collect::<Result<_>>()?,
            y0: Matrix::new(1, b, y0)?,
            targets: Matrix::new(horizon, b, targets)?,
        })
    }

    pub fn size(&self) -> usize {
        self.y0.cols()
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    encoder: StackRun,
    decoder_caches: Vec<Vec<StepCache>>,
    decoder_top: Vec<Matrix>,
    autoregressive: bool,
    batch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel {
    pub dims: ModelDims,
    pub variant: CellVariant,
    pub params: Seq2SeqParams,
}

impl Seq2SeqModel {
    /// Seeded initialization: encoder stack, then decoder stack, then the
    /// output projection, all drawn from one ChaCha8 stream.
    pub fn init(seed: u64, dims: ModelDims, variant: CellVariant) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = init_stack(&mut rng, dims.input, dims.hidden, variant, dims.depth)?;
        let decoder = init_stack(&mut rng, 1 + dims.hidden, dims.hidden, variant, dims.depth)?;
        let bound = glorot_bound(dims.hidden, 1);
        let dist = rand::distributions::Uniform::new_inclusive(-bound, bound);
        let w_hy = Matrix::new(
            1,
            dims.hidden,
            (0..dims.hidden)
                .map(|_| rand::distributions::Distribution::sample(&dist, &mut rng))
                .collect(),
        )?;
        Ok(Seq2SeqModel {
            dims,
            variant,
            params: Seq2SeqParams {
                encoder,
                decoder,
                w_hy,
                b_y: Matrix::zeros(1, 1),
            },
        })
    }

    pub fn zeros(dims: ModelDims, variant: CellVariant) -> Result<Self> {
        dims.validate()?;
        Ok(Seq2SeqModel {
            dims,
            variant,
            params: Seq2SeqParams::zeros(&dims),
        })
    }

    /// Checks that every tensor agrees with `dims` and `variant`.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let expected = Seq2SeqParams::zeros(&self.dims);
        let have = self.params.named_tensors();
        let want = expected.named_tensors();
        if have.len() != want.len() {
            return Err(Error::shape("Seq2SeqModel", format!("{} tensors", want.len()), format!("{} tensors", have.len())));
        }
        for ((name, m), (_, e)) in have.iter().zip(&want) {
            if m.shape() != e.shape() {
                return Err(Error::shape(
                    "Seq2SeqModel tensor",
                    format!("{name} {}x{}", e.rows(), e.cols()),
                    format!("{}x{}", m.rows(), m.cols()),
                ));
            }
        }
        for layer in self.params.encoder.iter().chain(&self.params.decoder) {
            layer.validate(self.variant)?;
        }
        Ok(())
    }

    pub fn census(&self) -> ParamCensus {
        let t = self.params.trainable(self.variant);
        ParamCensus {
            tensors: t.len(),
            scalars: t.iter().map(|(_, m)| m.len()).sum(),
        }
    }

    pub fn encode(&self, x_seq: &[Matrix]) -> Result<EncoderOutput> {
        self.encode_cached(x_seq).map(|(out, _)| out)
    }

    fn encode_cached(&self, x_seq: &[Matrix]) -> Result<(EncoderOutput, StackRun)> {
        let first = x_seq
            .first()
            .ok_or_else(|| Error::Empty("encoder sequence".into()))?;
        if first.rows() != self.dims.input {
            return Err(Error::shape(
                "encode",
                format!("model expects {} features", self.dims.input),
                format!("input has {}", first.rows()),
            ));
        }
        let batch = first.cols();
        let init = vec![LstmState::zeros(self.dims.hidden, batch); self.dims.depth];
        let run = stacked_forward_cached(&self.params.encoder, self.variant, x_seq, &init)?;
        let context = Matrix::mean_of(&run.top)?;
        let out = EncoderOutput {
            hidden_seq: run.top.clone(),
            context,
            final_states: run.final_states.clone(),
        };
        Ok((out, run))
    }

    /// Decodes `horizon` steps. Returns one `1×batch` prediction per step.
    pub fn decode(
        &self,
        enc: &EncoderOutput,
        y0: &Matrix,
        horizon: usize,
        mode: &DecodeMode,
    ) -> Result<Vec<Matrix>> {
        self.decode_cached(enc, y0, horizon, mode)
            .map(|(preds, _, _)| preds)
    }

    #[allow(clippy::type_complexity)]
    fn decode_cached(
        &self,
        enc: &EncoderOutput,
        y0: &Matrix,
        horizon: usize,
        mode: &DecodeMode,
    ) -> Result<(Vec<Matrix>, Vec<Vec<StepCache>>, Vec<Matrix>)> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let batch = enc.context.cols();
        if y0.shape() != (1, batch) {
            return Err(Error::shape("decode y0", format!("1x{batch}"), format!("{}x{}", y0.rows(), y0.cols())));
        }
        if let DecodeMode::TeacherForced(teacher) = mode {
            if teacher.rows() + 1 < horizon || teacher.cols() != batch {
                return Err(Error::shape(
                    "decode teacher sequence",
                    format!("at least {}x{batch}", horizon - 1),
                    format!("{}x{}", teacher.rows(), teacher.cols()),
                ));
            }
        }
        let mut states = enc.final_states.clone();
        let mut y_prev = y0.clone();
        let mut preds = Vec::with_capacity(horizon);
        let mut caches = Vec::with_capacity(horizon);
        let mut tops = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let input = Matrix::vstack(&[&y_prev, &enc.context])?;
            let (s, step_caches) =
                stack_step(&self.params.decoder, self.variant, &input, &mut states)?;
            let y = matmul(&self.params.w_hy, &s)?.add_column(&self.params.b_y)?;
            y_prev = match mode {
                DecodeMode::Autoregressive => y.clone(),
                DecodeMode::TeacherForced(teacher) if t + 1 < horizon => teacher.slice_rows(t, t + 1)?,
                DecodeMode::TeacherForced(_) => y.clone(),
            };
            preds.push(y);
            caches.push(step_caches);
            tops.push(s);
        }
        Ok((preds, caches, tops))
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.x_seq.len() != self.dims.t_enc {
            return Err(Error::shape(
                "window encoder block",
                format!("{} steps", self.dims.t_enc),
                format!("{} steps", batch.x_seq.len()),
            ));
        }
        Ok(())
    }

    /// Forward pass over a batch; returns `horizon×batch` predictions and the
    /// cache for [`Seq2SeqModel::backward`].
    pub fn forward_cached(&self, batch: &Batch, decoding: Decoding) -> Result<(Matrix, ForwardCache)> {
        self.check_batch(batch)?;
        let (enc, run) = self.encode_cached(&batch.x_seq)?;
        let mode = match decoding {
            Decoding::Autoregressive => DecodeMode::Autoregressive,
            Decoding::TeacherForced => {
                if batch.targets.rows() < self.dims.horizon {
                    return Err(Error::shape(
                        "teacher targets",
                        format!("{} rows", self.dims.horizon),
                        format!("{} rows", batch.targets.rows()),
                    ));
                }
                DecodeMode::TeacherForced(batch.targets.clone())
            }
        };
        let (preds, decoder_caches, decoder_top) =
            self.decode_cached(&enc, &batch.y0, self.dims.horizon, &mode)?;
        let refs: Vec<&Matrix> = preds.iter().collect();
        let out = Matrix::vstack(&refs)?;
        Ok((
            out,
            ForwardCache {
                encoder: run,
                decoder_caches,
                decoder_top,
                autoregressive: decoding == Decoding::Autoregressive,
                batch: batch.size(),
            },
        ))
    }

    pub fn forward_batch(&self, batch: &Batch, decoding: Decoding) -> Result<Matrix> {
        self.forward_cached(batch, decoding).map(|(p, _)| p)
    }

    /// Predictions for one window, in normalized units. The first decoder
    /// input is the window's last observed target value.
    pub fn forward(&self, window: &WindowSample, decoding: Decoding) -> Result<Vec<f64>> {
        let batch = Batch::from_windows(&[window])?;
        Ok(self.forward_batch(&batch, decoding)?.into_vec())
    }

    /// Backpropagation through decoder, mean context and encoder.
    /// `loss_grad` is `horizon×batch`: the loss gradient on each prediction.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Matrix) -> Result<Seq2SeqParams> {
        let horizon = cache.decoder_caches.len();
        let b = cache.batch;
        if loss_grad.shape() != (horizon, b) {
            return Err(Error::shape(
                "backward loss gradient",
                format!("{horizon}x{b}"),
                format!("{}x{}", loss_grad.rows(), loss_grad.cols()),
            ));
        }
        let p = &self.params;
        let mut grads = p.zeros_like();
        let n = self.dims.hidden;

        let mut dcontext = Matrix::zeros(n, b);
        let mut dec_back = StackBackward::new(&p.decoder, b);
        let mut carry = Matrix::zeros(1, b);
        for t in (0..horizon).rev() {
            let mut dy = loss_grad.slice_rows(t, t + 1)?;
            dy.add_assign(&carry)?;
            let s = &cache.decoder_top[t];
            grads.w_hy.add_assign(&matmul_nt(&dy, s)?)?;
            grads.b_y.add_assign(&dy.sum_columns())?;
            let ds = matmul_tn(&p.w_hy, &dy)?;
            let dinput = dec_back.step(&p.decoder, self.variant, &cache.decoder_caches[t], &ds)?;
            dcontext.add_assign(&dinput.slice_rows(1, 1 + n)?)?;
            carry = if cache.autoregressive && t > 0 {
                dinput.slice_rows(0, 1)?
            } else {
                Matrix::zeros(1, b)
            };
        }
        let init_grads = dec_back.initial_state_grads();
        grads.decoder = dec_back.grads;

        let t_enc = cache.encoder.caches.len();
        let dh_each = dcontext.scale(1.0 / t_enc as f64);
        let mut enc_back = StackBackward::new(&p.encoder, b);
        enc_back.seed_final_states(&init_grads)?;
        for t in (0..t_enc).rev() {
            enc_back.step(&p.encoder, self.variant, &cache.encoder.caches[t], &dh_each)?;
        }
        grads.encoder = enc_back.grads;
        Ok(grads)
    }
}
