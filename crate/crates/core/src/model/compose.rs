use super::ModelError;
use crate::tensor::{Tape, Var};

/// Anytime yield loss from per-step Ky, ETa and ETx using running sums:
/// `yl_t = clamp(ky_t · (1 − Σ clip(eta) / Σ etx), 0, 1)`. ETa is clipped to
/// `[0, etx]` inside the ratio only.
pub fn compose_yield_loss(ky: &[f64], eta: &[f64], etx: &[f64]) -> Result<Vec<f64>, ModelError> {
    if ky.len() != eta.len() || eta.len() != etx.len() {
        return Err(ModelError::LengthMismatch(format!(
            "ky {}, eta {}, etx {}",
            ky.len(),
            eta.len(),
            etx.len()
        )));
    }
    if ky.is_empty() {
        return Err(ModelError::Empty);
    }
    let (mut sum_eta, mut sum_etx) = (0.0, 0.0);
    let mut out = Vec::with_capacity(ky.len());
    for t in 0..ky.len() {
        sum_eta += eta[t].clamp(0.0, etx[t].max(0.0));
        sum_etx += etx[t];
        if !(sum_etx > 0.0) {
            return Err(ModelError::ZeroEtx { step: t });
        }
        out.push((ky[t] * (1.0 - sum_eta / sum_etx)).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Tape version of [`compose_yield_loss`] over a batch: `ky` and `eta` hold
/// `[B, 1]` values per step, `etx[t]` holds B values.
pub fn compose_on_tape(
    tape: &mut Tape,
    ky: &[Var],
    eta: &[Var],
    etx: &[Vec<f64>],
) -> Result<Vec<Var>, ModelError> {
    if ky.len() != eta.len() || eta.len() != etx.len() {
        return Err(ModelError::LengthMismatch(format!(
            "ky {}, eta {}, etx {}",
            ky.len(),
            eta.len(),
            etx.len()
        )));
    }
    let b = etx.first().ok_or(ModelError::Empty)?.len();
    let mut running_etx = vec![0.0; b];
    let mut running_eta: Option<Var> = None;
    let mut out = Vec::with_capacity(ky.len());
    for t in 0..ky.len() {
        if etx[t].len() != b {
            return Err(ModelError::LengthMismatch(format!("etx step {t} has {} rows", etx[t].len())));
        }
        let x = tape.constant(vec![b, 1], etx[t].clone())?;
        // min(max(eta, 0), etx) for etx >= 0
        let over = tape.sub(x, eta[t])?;
        let over = tape.relu(over);
        let capped = tape.sub(x, over)?;
        let clipped = tape.relu(capped);
        let total = match running_eta {
            None => clipped,
            Some(prev) => tape.add(prev, clipped)?,
        };
        running_eta = Some(total);
        for (r, v) in running_etx.iter_mut().zip(&etx[t]) {
            *r += v;
        }
        if running_etx.iter().any(|r| !(*r > 0.0)) {
            return Err(ModelError::ZeroEtx { step: t });
        }
        let denom = tape.constant(vec![b, 1], running_etx.clone())?;
        let ratio = tape.div(total, denom)?;
        let deficit = tape.affine(ratio, -1.0, 1.0);
        let yl = tape.mul(ky[t], deficit)?;
        out.push(tape.clamp(yl, 0.0, 1.0));
    }
    Ok(out)
}

/// Yield loss from seasonal sums of a simulated ETa series and a fixed Ky.
pub fn simulation_baseline(etx: &[f64], eta_sim: &[f64], ky_fixed: f64) -> Result<f64, ModelError> {
    if etx.len() != eta_sim.len() {
        return Err(ModelError::LengthMismatch(format!("etx {} vs eta {}", etx.len(), eta_sim.len())));
    }
    if !(ky_fixed > 0.0) {
        return Err(ModelError::BadConfig(format!("ky_fixed {ky_fixed} must be positive")));
    }
    let sx: f64 = etx.iter().sum();
    if !(sx > 0.0) {
        return Err(ModelError::ZeroEtx { step: etx.len().saturating_sub(1) });
    }
    let sa: f64 = eta_sim.iter().sum();
    Ok((ky_fixed * (1.0 - sa / sx)).clamp(0.0, 1.0))
}
