//! Central finite-difference gradient checker.

use super::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference half step.
    pub eps: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Lower bound on the denominator of the relative error, so that
    /// vanishing gradients are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter, element)` with the largest error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub passed: bool,
}

fn eval<F, E>(f: &F, params: &[Tensor]) -> Result<f64, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p)).collect();
    let loss = f(&mut tape, &vars)?;
    Ok(tape.item(loss))
}

/// Reverse-mode gradient of `f` with respect to every parameter.
pub fn analytic_gradients<F, E>(f: &F, params: &[Tensor]) -> Result<Vec<Vec<f64>>, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| tape.leaf(&p.clone().with_grad()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.wrt(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect())
}

/// Compares supplied gradients against `(f(p+eps) − f(p−eps)) / (2·eps)` for
/// every scalar parameter. The relative error is `|a − n| / max(|n|, floor)`.
pub fn compare_gradients<F, E>(
    f: &F,
    params: &[Tensor],
    analytic: &[Vec<f64>],
    cfg: GradCheckConfig,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    if !(cfg.eps > 0.0) {
        return Err(TensorError::InvalidArgument {
            op: "grad_check",
            detail: format!("eps must be positive, got {}", cfg.eps),
        }
        .into());
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0_f64;
    let mut worst = None;
    let mut checked = 0;
    for pi in 0..params.len() {
        for i in 0..params[pi].len() {
            let orig = params[pi].data()[i];
            work[pi].data_mut()[i] = orig + cfg.eps;
            let up = eval(f, &work)?;
            work[pi].data_mut()[i] = orig - cfg.eps;
            let down = eval(f, &work)?;
            work[pi].data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = analytic[pi][i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(TensorError::NonFinite { param: pi, index: i }.into());
            }
            let rel = (a - numeric).abs() / numeric.abs().max(cfg.floor);
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some((pi, i));
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst,
        checked,
        passed: max_rel <= cfg.tol,
    })
}

/// Runs [`analytic_gradients`] and [`compare_gradients`].
pub fn grad_check<F, E>(f: &F, params: &[Tensor], cfg: GradCheckConfig) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let analytic = analytic_gradients(f, params)?;
    compare_gradients(f, params, &analytic, cfg)
}
