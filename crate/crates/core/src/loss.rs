//! Physics-informed training objective and regression metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tape, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty batch")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("negative ETx value {0}")]
    NegativeEtx(f64),
    #[error("invalid loss weights ({0}, {1}): both must be >= 0 and not both zero")]
    BadWeights(f64, f64),
    #[error("need at least 2 samples, got {0}")]
    TooFew(usize),
    #[error("targets have zero variance, R² is undefined")]
    ZeroVariance,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Weights of the data-fit and physics terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, LossError> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !ok(lambda1) || !ok(lambda2) || (lambda1 == 0.0 && lambda2 == 0.0) {
            return Err(LossError::BadWeights(lambda1, lambda2));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
        }
    }
}

/// Mean squared error between predicted and true yield loss.
pub fn data_loss(tape: &mut Tape, pred: Var, truth: &[f64]) -> Result<Var, LossError> {
    let n = tape.value(pred).len();
    if n == 0 || truth.is_empty() {
        return Err(LossError::Empty);
    }
    if n != truth.len() {
        return Err(LossError::LengthMismatch(n, truth.len()));
    }
    let shape = tape.shape(pred).to_vec();
    let y = tape.constant(shape, truth.to_vec())?;
    let d = tape.sub(pred, y)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// Bound penalties plus the within-bounds pull towards ETx, averaged over
/// every element. Branch masks are constants during backward.
pub fn physics_loss(tape: &mut Tape, eta: Var, etx: &[f64]) -> Result<Var, LossError> {
    let n = tape.value(eta).len();
    if n == 0 {
        return Err(LossError::Empty);
    }
    if n != etx.len() {
        return Err(LossError::LengthMismatch(n, etx.len()));
    }
    if let Some(&bad) = etx.iter().find(|&&e| !(e >= 0.0)) {
        return Err(LossError::NegativeEtx(bad));
    }
    let shape = tape.shape(eta).to_vec();
    let below: Vec<f64> = tape
        .value(eta)
        .iter()
        .map(|&e| if e < 0.0 { 1.0 } else { 0.0 })
        .collect();
    // eta > etx and 0 <= eta <= etx share the same quadratic.
    let rest: Vec<f64> = below.iter().map(|b| 1.0 - b).collect();
    let below = tape.constant(shape.clone(), below)?;
    let rest = tape.constant(shape.clone(), rest)?;
    let etx = tape.constant(shape, etx.to_vec())?;

    let lower = tape.square(eta);
    let lower = tape.mul(lower, below)?;
    let diff = tape.sub(eta, etx)?;
    let upper = tape.square(diff);
    let upper = tape.mul(upper, rest)?;
    let per_element = tape.add(lower, upper)?;
    Ok(tape.mean(per_element))
}

/// `λ1 · data + λ2 · physics`
pub fn total_loss(tape: &mut Tape, data: Var, phys: Var, w: LossWeights) -> Result<Var, LossError> {
    let a = tape.affine(data, w.lambda1, 0.0);
    let b = tape.affine(phys, w.lambda2, 0.0);
    Ok(tape.add(a, b)?)
}

/// Per-element physics penalty on plain values.
pub fn physics_penalty(eta: f64, etx: f64) -> f64 {
    if eta < 0.0 {
        eta * eta
    } else {
        (eta - etx) * (eta - etx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
}

/// MAE, RMSE and R² (with SStot taken around the mean of `truth`).
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<MetricsReport, LossError> {
    if pred.len() != truth.len() {
        return Err(LossError::LengthMismatch(pred.len(), truth.len()));
    }
    let n = truth.len();
    if n < 2 {
        return Err(LossError::TooFew(n));
    }
    let nf = n as f64;
    let mean_t = truth.iter().sum::<f64>() / nf;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean_t).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(LossError::ZeroVariance);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / nf;
    let rmse = (ss_res / nf).sqrt();
    Ok(MetricsReport {
        mae,
        // Equal absolute errors can leave sqrt one ulp below the mean.
        rmse: rmse.max(mae),
        r2: 1.0 - ss_res / ss_tot,
        n,
    })
}
