//! Recurrent cells: the plain sigmoid RNN and the gated LSTM cell, plus
//! stacked multi-layer execution with full backpropagation through time.
//!
//! LSTM step, per column of the batch:
//!
//! ```text
//! i  = σ(W_xi x + W_hi h + b_i)
//! f  = σ(W_xf x + W_hf h + b_f)
//! o  = σ(W_xo x + W_ho h + b_o)
//! g  = tanh(W_xg x + b_g)               InputCandidate
//! g  = tanh(W_xg x + W_hg h + b_g)      RecurrentCandidate
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add, hadamard, map_sigmoid, map_tanh, matmul, matmul_nt, matmul_tn, Matrix};

/// Form of the LSTM candidate activation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellVariant {
    /// Candidate sees only the current input; `W_hg` is held at zero and is
    /// not trainable.
    #[default]
    InputCandidate,
    /// Candidate also receives the previous hidden state through `W_hg`.
    RecurrentCandidate,
}

impl CellVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            CellVariant::InputCandidate => "input-candidate",
            CellVariant::RecurrentCandidate => "recurrent-candidate",
        }
    }
}

impl std::str::FromStr for CellVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input-candidate" => Ok(CellVariant::InputCandidate),
            "recurrent-candidate" => Ok(CellVariant::RecurrentCandidate),
            other => Err(Error::InvalidArgument(format!(
                "unknown cell variant `{other}` (expected input-candidate or recurrent-candidate)"
            ))),
        }
    }
}

fn expect_shape(op: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::shape(
            op,
            format!("expected {rows}x{cols}"),
            format!("got {}x{}", m.rows(), m.cols()),
        ))
    }
}

// ---------------------------------------------------------------------------
// Plain RNN

#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    pub w_xh: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
    pub w_hy: Matrix,
    pub b_y: Matrix,
}

impl RnnParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        RnnParams {
            w_xh: Matrix::zeros(hidden, input),
            w_hh: Matrix::zeros(hidden, hidden),
            b_h: Matrix::zeros(hidden, 1),
            w_hy: Matrix::zeros(output, hidden),
            b_y: Matrix::zeros(output, 1),
        }
    }

    fn validate(&self) -> Result<()> {
        let hidden = self.w_xh.rows();
        let output = self.w_hy.rows();
        expect_shape("RnnParams.w_hh", &self.w_hh, hidden, hidden)?;
        expect_shape("RnnParams.b_h", &self.b_h, hidden, 1)?;
        expect_shape("RnnParams.w_hy", &self.w_hy, output, hidden)?;
        expect_shape("RnnParams.b_y", &self.b_y, output, 1)?;
        Ok(())
    }
}

/// One step of the sigmoid RNN: returns `(h_t, y_t)`.
pub fn rnn_step(params: &RnnParams, x_t: &Matrix, h_prev: &Matrix) -> Result<(Matrix, Matrix)> {
    params.validate()?;
    let pre = add(&matmul(&params.w_xh, x_t)?, &matmul(&params.w_hh, h_prev)?)?
        .add_column(&params.b_h)?;
    let h = map_sigmoid(&pre);
    let y = matmul(&params.w_hy, &h)?.add_column(&params.b_y)?;
    Ok((h, y))
}

// ---------------------------------------------------------------------------
// LSTM

/// Weights and biases of one LSTM layer, grouped by gate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Matrix,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Matrix,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Matrix,
    pub w_xg: Matrix,
    pub w_hg: Matrix,
    pub b_g: Matrix,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wx = || Matrix::zeros(hidden, input);
        let wh = || Matrix::zeros(hidden, hidden);
        let b = || Matrix::zeros(hidden, 1);
        LstmParams {
            w_xi: wx(),
            w_hi: wh(),
            b_i: b(),
            w_xf: wx(),
            w_hf: wh(),
            b_f: b(),
            w_xo: wx(),
            w_ho: wh(),
            b_o: b(),
            w_xg: wx(),
            w_hg: wh(),
            b_g: b(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_xi.rows()
    }

    /// All twelve tensors in canonical order, trainable or not.
    pub fn all_tensors(&self) -> [(&'static str, &Matrix); 12] {
        [
            ("w_xi", &self.w_xi),
            ("w_hi", &self.w_hi),
            ("b_i", &self.b_i),
            ("w_xf", &self.w_xf),
            ("w_hf", &self.w_hf),
            ("b_f", &self.b_f),
            ("w_xo", &self.w_xo),
            ("w_ho", &self.w_ho),
            ("b_o", &self.b_o),
            ("w_xg", &self.w_xg),
            ("w_hg", &self.w_hg),
            ("b_g", &self.b_g),
        ]
    }

    pub fn all_tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 12] {
        [
            ("w_xi", &mut self.w_xi),
            ("w_hi", &mut self.w_hi),
            ("b_i", &mut self.b_i),
            ("w_xf", &mut self.w_xf),
            ("w_hf", &mut self.w_hf),
            ("b_f", &mut self.b_f),
            ("w_xo", &mut self.w_xo),
            ("w_ho", &mut self.w_ho),
            ("b_o", &mut self.b_o),
            ("w_xg", &mut self.w_xg),
            ("w_hg", &mut self.w_hg),
            ("b_g", &mut self.b_g),
        ]
    }

    /// Trainable tensors for `variant`. `w_hg` is excluded under
    /// [`CellVariant::InputCandidate`].
    pub fn tensors(&self, variant: CellVariant) -> Vec<(&'static str, &Matrix)> {
        self.all_tensors()
            .into_iter()
            .filter(|(name, _)| variant == CellVariant::RecurrentCandidate || *name != "w_hg")
            .collect()
    }

    pub fn tensors_mut(&mut self, variant: CellVariant) -> Vec<(&'static str, &mut Matrix)> {
        self.all_tensors_mut()
            .into_iter()
            .filter(|(name, _)| variant == CellVariant::RecurrentCandidate || *name != "w_hg")
            .collect()
    }

    pub fn validate(&self, variant: CellVariant) -> Result<()> {
        let (hidden, input) = self.w_xi.shape();
        for (name, m) in self.all_tensors() {
            let (rows, cols) = match name.as_bytes() {
                [b'w', b'_', b'x', ..] => (hidden, input),
                [b'w', b'_', b'h', ..] => (hidden, hidden),
                _ => (hidden, 1),
            };
            expect_shape("LstmParams", m, rows, cols)
                .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")))?;
        }
        if variant == CellVariant::InputCandidate && self.w_hg.as_slice().iter().any(|&v| v != 0.0)
        {
            return Err(Error::InvalidArgument(
                "w_hg must be zero for the input-candidate cell".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Matrix,
    pub c: Matrix,
}

impl LstmState {
    pub fn zeros(hidden: usize, batch: usize) -> Self {
        LstmState {
            h: Matrix::zeros(hidden, batch),
            c: Matrix::zeros(hidden, batch),
        }
    }
}

/// Intermediate activations of one `lstm_step`, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    pub i: Matrix,
    pub f: Matrix,
    pub o: Matrix,
    pub g: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
}

fn gate_preactivation(w_x: &Matrix, w_h: &Matrix, b: &Matrix, x: &Matrix, h: &Matrix) -> Result<Matrix> {
    add(&matmul(w_x, x)?, &matmul(w_h, h)?)?.add_column(b)
}

fn check_step_inputs(params: &LstmParams, x: &Matrix, state: &LstmState) -> Result<()> {
    let (hidden, input) = params.w_xi.shape();
    if x.rows() != input {
        return Err(Error::shape(
            "lstm_step input",
            format!("expected {input} rows"),
            format!("got {}x{}", x.rows(), x.cols()),
        ));
    }
    let batch = x.cols();
    expect_shape("lstm_step h", &state.h, hidden, batch)?;
    expect_shape("lstm_step c", &state.c, hidden, batch)?;
    if !state.h.is_finite() || !state.c.is_finite() {
        return Err(Error::NonFinite("lstm_step state".into()));
    }
    Ok(())
}

/// Forward step that also returns the activations needed by
/// [`lstm_step_backward`].
pub fn lstm_step_cached(
    params: &LstmParams,
    variant: CellVariant,
    x: &Matrix,
    state: &LstmState,
) -> Result<(LstmState, StepCache)> {
    check_step_inputs(params, x, state)?;
    let h = &state.h;
    let i = map_sigmoid(&gate_preactivation(&params.w_xi, &params.w_hi, &params.b_i, x, h)?);
    let f = map_sigmoid(&gate_preactivation(&params.w_xf, &params.w_hf, &params.b_f, x, h)?);
    let o = map_sigmoid(&gate_preactivation(&params.w_xo, &params.w_ho, &params.b_o, x, h)?);
    let g_pre = match variant {
        CellVariant::InputCandidate => matmul(&params.w_xg, x)?.add_column(&params.b_g)?,
        CellVariant::RecurrentCandidate => {
            gate_preactivation(&params.w_xg, &params.w_hg, &params.b_g, x, h)?
        }
    };
    let g = map_tanh(&g_pre);
    let c = add(&hadamard(&f, &state.c)?, &hadamard(&i, &g)?)?;
    let tanh_c = map_tanh(&c);
    let h_next = hadamard(&o, &tanh_c)?;
    let cache = StepCache {
        x: x.clone(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        i,
        f,
        o,
        g,
        c: c.clone(),
        tanh_c,
    };
    Ok((LstmState { h: h_next, c }, cache))
}

pub fn lstm_step(
    params: &LstmParams,
    variant: CellVariant,
    x: &Matrix,
    state: &LstmState,
) -> Result<LstmState> {
    lstm_step_cached(params, variant, x, state).map(|(s, _)| s)
}

/// Gradients of one step with respect to its inputs.
#[derive(Clone, Debug)]
pub struct StepGrads {
    pub params: LstmParams,
    pub x: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
}

/// Backward pass of one step. `grad_h_next` and `grad_c_next` are the
/// gradients flowing into the step's outputs `h'` and `c'`.
pub fn lstm_step_backward(
    params: &LstmParams,
    variant: CellVariant,
    cache: &StepCache,
    grad_h_next: &Matrix,
    grad_c_next: &Matrix,
) -> Result<StepGrads> {
    let mut grads = LstmParams::zeros(params.input_size(), params.hidden_size());
    let (x, h_prev, c_prev) =
        lstm_step_backward_into(params, variant, cache, grad_h_next, grad_c_next, &mut grads)?;
    Ok(StepGrads {
        params: grads,
        x,
        h_prev,
        c_prev,
    })
}

/// As [`lstm_step_backward`], but accumulates parameter gradients into
/// `grads`. Returns `(grad_x, grad_h_prev, grad_c_prev)`.
pub fn lstm_step_backward_into(
    params: &LstmParams,
    variant: CellVariant,
    cache: &StepCache,
    grad_h_next: &Matrix,
    grad_c_next: &Matrix,
    grads: &mut LstmParams,
) -> Result<(Matrix, Matrix, Matrix)> {
    let hidden = params.hidden_size();
    let batch = cache.x.cols();
    expect_shape("lstm_step_backward cache.i", &cache.i, hidden, batch)?;
    expect_shape("lstm_step_backward cache.x", &cache.x, params.input_size(), batch)?;
    expect_shape("lstm_step_backward grad_h", grad_h_next, hidden, batch)?;
    expect_shape("lstm_step_backward grad_c", grad_c_next, hidden, batch)?;

    let n = hidden * batch;
    let dh = grad_h_next.as_slice();
    let dc_in = grad_c_next.as_slice();
    let (i, f, o, g) = (
        cache.i.as_slice(),
        cache.f.as_slice(),
        cache.o.as_slice(),
        cache.g.as_slice(),
    );
    let tc = cache.tanh_c.as_slice();
    let cp = cache.c_prev.as_slice();

    let mut da_i = vec![0.0; n];
    let mut da_f = vec![0.0; n];
    let mut da_o = vec![0.0; n];
    let mut da_g = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let dc = dc_in[k] + dh[k] * o[k] * (1.0 - tc[k] * tc[k]);
        da_o[k] = dh[k] * tc[k] * o[k] * (1.0 - o[k]);
        da_f[k] = dc * cp[k] * f[k] * (1.0 - f[k]);
        da_i[k] = dc * g[k] * i[k] * (1.0 - i[k]);
        da_g[k] = dc * i[k] * (1.0 - g[k] * g[k]);
        dc_prev[k] = dc * f[k];
    }
    let to_m = |v: Vec<f64>| Matrix::new(hidden, batch, v);
    let da_i = to_m(da_i)?;
    let da_f = to_m(da_f)?;
    let da_o = to_m(da_o)?;
    let da_g = to_m(da_g)?;
    let dc_prev = to_m(dc_prev)?;

    let x = &cache.x;
    let hp = &cache.h_prev;
    grads.w_xi.add_assign(&matmul_nt(&da_i, x)?)?;
    grads.w_hi.add_assign(&matmul_nt(&da_i, hp)?)?;
    grads.b_i.add_assign(&da_i.sum_columns())?;
    grads.w_xf.add_assign(&matmul_nt(&da_f, x)?)?;
    grads.w_hf.add_assign(&matmul_nt(&da_f, hp)?)?;
    grads.b_f.add_assign(&da_f.sum_columns())?;
    grads.w_xo.add_assign(&matmul_nt(&da_o, x)?)?;
    grads.w_ho.add_assign(&matmul_nt(&da_o, hp)?)?;
    grads.b_o.add_assign(&da_o.sum_columns())?;
    grads.w_xg.add_assign(&matmul_nt(&da_g, x)?)?;
    grads.b_g.add_assign(&da_g.sum_columns())?;

    let mut dx = matmul_tn(&params.w_xi, &da_i)?;
    dx.add_assign(&matmul_tn(&params.w_xf, &da_f)?)?;
    dx.add_assign(&matmul_tn(&params.w_xo, &da_o)?)?;
    dx.add_assign(&matmul_tn(&params.w_xg, &da_g)?)?;

    let mut dh_prev = matmul_tn(&params.w_hi, &da_i)?;
    dh_prev.add_assign(&matmul_tn(&params.w_hf, &da_f)?)?;
    dh_prev.add_assign(&matmul_tn(&params.w_ho, &da_o)?)?;
    if variant == CellVariant::RecurrentCandidate {
        grads.w_hg.add_assign(&matmul_nt(&da_g, hp)?)?;
        dh_prev.add_assign(&matmul_tn(&params.w_hg, &da_g)?)?;
    }
    Ok((dx, dh_prev, dc_prev))
}

// ---------------------------------------------------------------------------
// Stacked execution

fn check_stack(layers: &[LstmParams], input: usize) -> Result<()> {
    let first = layers
        .first()
        .ok_or_else(|| Error::Empty("stack has no layers".into()))?;
    if first.input_size() != input {
        return Err(Error::shape(
            "stacked layer 0 input",
            format!("layer expects {}", first.input_size()),
            format!("input has {input}"),
        ));
    }
    for (l, pair) in layers.windows(2).enumerate() {
        if pair[1].input_size() != pair[0].hidden_size() {
            return Err(Error::shape(
                "stacked layer input",
                format!("layer {} expects {}", l + 1, pair[1].input_size()),
                format!("layer {l} emits {}", pair[0].hidden_size()),
            ));
        }
    }
    Ok(())
}

/// Advances every layer of the stack by one time step, updating `states` in
/// place. Returns the top layer's hidden output and per-layer caches.
pub fn stack_step(
    layers: &[LstmParams],
    variant: CellVariant,
    x: &Matrix,
    states: &mut [LstmState],
) -> Result<(Matrix, Vec<StepCache>)> {
    check_stack(layers, x.rows())?;
    if states.len() != layers.len() {
        return Err(Error::shape(
            "stack_step states",
            format!("{} layers", layers.len()),
            format!("{} states", states.len()),
        ));
    }
    let mut caches = Vec::with_capacity(layers.len());
    let mut input = x.clone();
    for (params, state) in layers.iter().zip(states.iter_mut()) {
        let (next, cache) = lstm_step_cached(params, variant, &input, state)?;
        input = next.h.clone();
        *state = next;
        caches.push(cache);
    }
    Ok((input, caches))
}

/// Output of a cached stacked run: top-layer hidden sequence, the final
/// state of every layer, and step caches indexed `[time][layer]`.
#[derive(Clone, Debug)]
pub struct StackRun {
    pub top: Vec<Matrix>,
    pub final_states: Vec<LstmState>,
    pub caches: Vec<Vec<StepCache>>,
}

pub fn stacked_forward_cached(
    layers: &[LstmParams],
    variant: CellVariant,
    x_seq: &[Matrix],
    init_states: &[LstmState],
) -> Result<StackRun> {
    if x_seq.is_empty() {
        return Err(Error::Empty("input sequence".into()));
    }
    let mut states = init_states.to_vec();
    let mut top = Vec::with_capacity(x_seq.len());
    let mut caches = Vec::with_capacity(x_seq.len());
    for x in x_seq {
        let (h, c) = stack_step(layers, variant, x, &mut states)?;
        top.push(h);
        caches.push(c);
    }
    Ok(StackRun {
        top,
        final_states: states,
        caches,
    })
}

/// Runs the stack over `x_seq`; layer `l` consumes layer `l-1`'s hidden
/// sequence. Returns the top hidden sequence and each layer's final state.
pub fn stacked_forward(
    layers: &[LstmParams],
    variant: CellVariant,
    x_seq: &[Matrix],
    init_states: &[LstmState],
) -> Result<(Vec<Matrix>, Vec<LstmState>)> {
    let run = stacked_forward_cached(layers, variant, x_seq, init_states)?;
    Ok((run.top, run.final_states))
}

/// Reverse-time accumulator for a stack. Holds parameter gradients and the
/// running `(dh, dc)` flowing backwards through each layer's recurrence.
#[derive(Clone, Debug)]
pub struct StackBackward {
    pub grads: Vec<LstmParams>,
    dh: Vec<Matrix>,
    dc: Vec<Matrix>,
}

impl StackBackward {
    pub fn new(layers: &[LstmParams], batch: usize) -> Self {
        StackBackward {
            grads: layers
                .iter()
                .map(|p| LstmParams::zeros(p.input_size(), p.hidden_size()))
                .collect(),
            dh: layers.iter().map(|p| Matrix::zeros(p.hidden_size(), batch)).collect(),
            dc: layers.iter().map(|p| Matrix::zeros(p.hidden_size(), batch)).collect(),
        }
    }

    /// Adds gradients arriving at the final `(h, c)` of each layer.
    pub fn seed_final_states(&mut self, grads: &[(Matrix, Matrix)]) -> Result<()> {
        if grads.len() != self.dh.len() {
            return Err(Error::shape(
                "seed_final_states",
                format!("{} layers", self.dh.len()),
                format!("{} grads", grads.len()),
            ));
        }
        for (l, (gh, gc)) in grads.iter().enumerate() {
            self.dh[l].add_assign(gh)?;
            self.dc[l].add_assign(gc)?;
        }
        Ok(())
    }

    /// Back-propagates one time step given the gradient on that step's
    /// top-layer output. Steps must be visited in reverse order. Returns
    /// the gradient on the step's input.
    pub fn step(
        &mut self,
        layers: &[LstmParams],
        variant: CellVariant,
        caches: &[StepCache],
        grad_top: &Matrix,
    ) -> Result<Matrix> {
        if caches.len() != layers.len() {
            return Err(Error::shape(
                "StackBackward::step caches",
                format!("{} layers", layers.len()),
                format!("{} caches", caches.len()),
            ));
        }
        let mut upstream = grad_top.clone();
        for l in (0..layers.len()).rev() {
            let mut dh = self.dh[l].clone();
            dh.add_assign(&upstream)?;
            let (dx, dh_prev, dc_prev) = lstm_step_backward_into(
                &layers[l],
                variant,
                &caches[l],
                &dh,
                &self.dc[l],
                &mut self.grads[l],
            )?;
            self.dh[l] = dh_prev;
            self.dc[l] = dc_prev;
            upstream = dx;
        }
        Ok(upstream)
    }

    /// Gradients on each layer's initial `(h, c)` once all steps are done.
    pub fn initial_state_grads(&self) -> Vec<(Matrix, Matrix)> {
        self.dh.iter().cloned().zip(self.dc.iter().cloned()).collect()
    }
}

// ---------------------------------------------------------------------------
// Initialization

/// Glorot-uniform bound for a `fan_out×fan_in` weight.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = glorot_bound(cols, rows);
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("sampled values are finite")
}

pub(crate) fn init_layer(
    rng: &mut ChaCha8Rng,
    input: usize,
    hidden: usize,
    variant: CellVariant,
) -> LstmParams {
    let mut p = LstmParams::zeros(input, hidden);
    p.w_xi = uniform_matrix(rng, hidden, input);
    p.w_hi = uniform_matrix(rng, hidden, hidden);
    p.w_xf = uniform_matrix(rng, hidden, input);
    p.w_hf = uniform_matrix(rng, hidden, hidden);
    p.b_f = Matrix::ones(hidden, 1);
    p.w_xo = uniform_matrix(rng, hidden, input);
    p.w_ho = uniform_matrix(rng, hidden, hidden);
    p.w_xg = uniform_matrix(rng, hidden, input);
    if variant == CellVariant::RecurrentCandidate {
        p.w_hg = uniform_matrix(rng, hidden, hidden);
    }
    p
}

pub(crate) fn init_stack(
    rng: &mut ChaCha8Rng,
    input: usize,
    hidden: usize,
    variant: CellVariant,
    depth: usize,
) -> Result<Vec<LstmParams>> {
    if input == 0 || hidden == 0 || depth == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive (input {input}, hidden {hidden}, depth {depth})"
        )));
    }
    Ok((0..depth)
        .map(|l| init_layer(rng, if l == 0 { input } else { hidden }, hidden, variant))
        .collect())
}

/// Seeded initialization of a `depth`-layer stack: Glorot-uniform weights,
/// zero biases except the forget gate bias, which starts at 1.
pub fn init_params(
    seed: u64,
    input: usize,
    hidden: usize,
    variant: CellVariant,
    depth: usize,
) -> Result<Vec<LstmParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_stack(&mut rng, input, hidden, variant, depth)
}
