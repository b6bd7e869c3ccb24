//! ADAM, the two training losses, RMSE and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for one parameter set. Buffers mirror the parameter list
/// passed to [`AdamState::new`]; the same order must be used on every step.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        AdamState {
            config,
            m: params.iter().map(|p| p.zeros_like()).collect(),
            v: params.iter().map(|p| p.zeros_like()).collect(),
            t: 0,
        }
    }

    /// One bias-corrected ADAM update, in place.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} buffers", self.m.len()),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("param {k} {}x{}", p.rows(), p.cols()),
                    format!("grad {}x{}", g.rows(), g.cols()),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {k}")));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (((theta, &gi), mi), vi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mae,
    Mse,
}

impl LossKind {
    pub fn label(self) -> &'static str {
        match self {
            LossKind::Mae => "MAE",
            LossKind::Mse => "MSE",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}` (expected mae or mse)"))),
        }
    }
}

fn check_pair(op: &'static str, pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty(format!("{op} on empty vectors")));
    }
    if pred.len() != target.len() {
        return Err(Error::shape(op, pred.len(), target.len()));
    }
    Ok(())
}

/// Mean loss over all entries and its gradient with respect to `pred`.
/// The MAE subgradient at a zero residual is 0.
pub fn loss(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_pair("loss", pred, target)?;
    let n = pred.len() as f64;
    let residuals = pred.iter().zip(target).map(|(p, t)| p - t);
    let (value, grad) = match kind {
        LossKind::Mae => residuals.fold((0.0, Vec::with_capacity(pred.len())), |(s, mut g), r| {
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            g.push(sign / n);
            (s + r.abs(), g)
        }),
        LossKind::Mse => residuals.fold((0.0, Vec::with_capacity(pred.len())), |(s, mut g), r| {
            g.push(2.0 * r / n);
            (s + r * r, g)
        }),
    };
    let value = value / n;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((value, grad))
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("rmse", pred, target)?;
    let mse: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn global_norm(grads: &[&Matrix]) -> f64 {
    grads.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt()
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Matrix], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) || !max_norm.is_finite() {
        return Err(Error::InvalidArgument(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = grads.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.as_mut_slice() {
                *v *= k;
            }
        }
    }
    Ok(norm)
}
