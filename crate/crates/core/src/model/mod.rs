//! LSTM backbone with a shared per-step head, the physics-informed Ky/ETa
//! output heads and the direct-regression baseline.

mod checkpoint;
mod compose;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use compose::{compose_on_tape, compose_yield_loss, simulation_baseline};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{PixelSample, N_BANDS, N_FEATURES};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected {expected} input features, got {actual}")]
    FeatureWidth { expected: usize, actual: usize },
    #[error("batch-norm running statistics are not initialised; train before evaluating")]
    UninitializedStats,
    #[error("cumulative ETx is zero at step {step}")]
    ZeroEtx { step: usize },
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("empty batch or sequence")]
    Empty,
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Input channels the model may see. Excluded channels are zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Weather,
    Spectral,
    SpectralWeather,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Weather, Modality::Spectral, Modality::SpectralWeather];

    pub fn uses(self, feature: usize) -> bool {
        match self {
            Modality::Weather => feature >= N_BANDS,
            Modality::Spectral => feature < N_BANDS,
            Modality::SpectralWeather => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Weather => "weather",
            Modality::Spectral => "spectral",
            Modality::SpectralWeather => "spectral-weather",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown modality {s:?} (weather | spectral | spectral-weather)"))
    }
}

/// Which output layer sits on the shared head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    /// softplus Ky and raw ETa per step, composed into yield loss
    PhysicsInformed,
    /// sigmoid yield loss per step
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub hidden: usize,
    pub head_units: usize,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            head_units: 128,
            dropout: 0.1,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.head_units == 0 {
            return Err(ModelError::BadConfig("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::BadConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || !(self.bn_eps > 0.0) {
            return Err(ModelError::BadConfig("bad batch-norm momentum or eps".into()));
        }
        Ok(())
    }
}

/// Per-feature standardisation fitted on training pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; N_FEATURES],
            sd: vec![1.0; N_FEATURES],
        }
    }

    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a PixelSample>) -> Result<Self, ModelError> {
        let mut n = 0.0;
        let mut sum = [0.0; N_FEATURES];
        let mut sq = [0.0; N_FEATURES];
        for s in samples {
            for t in 0..s.len() {
                let f = s.features(t);
                for j in 0..N_FEATURES {
                    sum[j] += f[j];
                    sq[j] += f[j] * f[j];
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return Err(ModelError::Empty);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let sd = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let v = (q / n - m * m).max(0.0).sqrt();
                if v > 1e-12 {
                    v
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, sd })
    }
}

/// Running batch-norm moments, shared by every timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Batch-norm moments of one training batch over all its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

/// Standardised, modality-masked inputs of equal-length pixels.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, 12]` per timestep
    pub inputs: Vec<Tensor>,
    /// ETx (mm) per timestep, length B each
    pub etx: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.targets.len()
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }
}

/// Tape handles of one forward pass, `[B, 1]` per step.
#[derive(Debug, Clone)]
pub struct Forward {
    pub ky: Vec<Var>,
    /// Raw ETa head output, a fraction of the step's ETx.
    pub eta_fraction: Vec<Var>,
    /// ETa in mm.
    pub eta: Vec<Var>,
    pub yl: Vec<Var>,
    pub moments: Vec<BatchMoments>,
}

/// Per-pixel result of an evaluation pass. ETa is in mm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelOutput {
    pub ky_t: Vec<f64>,
    pub eta_t: Vec<f64>,
    pub yl_t: Vec<f64>,
    pub yl_final: f64,
}

// Parameter slots.
const LSTM_W: usize = 0;
const LSTM_B: usize = 1;
const HEAD_W: usize = 2;
const HEAD_B: usize = 3;
const BN_GAMMA: usize = 4;
const BN_BETA: usize = 5;
const OUT_A_W: usize = 6;
const OUT_A_B: usize = 7;
const OUT_B_W: usize = 8;
const OUT_B_B: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: NetworkKind,
    pub config: NetworkConfig,
    pub modality: Modality,
    pub params: Vec<Tensor>,
    pub bn_stats: Option<RunningStats>,
    pub scaler: FeatureScaler,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("length matches shape").with_grad()
}

impl Network {
    pub fn new(
        kind: NetworkKind,
        config: NetworkConfig,
        modality: Modality,
        scaler: FeatureScaler,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let (h, u) = (config.hidden, config.head_units);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm_bound = 1.0 / (h as f64).sqrt();
        let mut lstm_b = uniform(&mut rng, vec![4 * h], lstm_bound);
        for v in &mut lstm_b.data_mut()[h..2 * h] {
            *v += 1.0;
        }
        let mut params = vec![
            uniform(&mut rng, vec![N_FEATURES + h, 4 * h], lstm_bound),
            lstm_b,
            uniform(&mut rng, vec![h, u], 1.0 / (h as f64).sqrt()),
            uniform(&mut rng, vec![u], 1.0 / (h as f64).sqrt()),
            Tensor::full(vec![u], 1.0).with_grad(),
            Tensor::zeros(vec![u]).with_grad(),
        ];
        let out_bound = 1.0 / (u as f64).sqrt();
        match kind {
            NetworkKind::PhysicsInformed => {
                params.push(uniform(&mut rng, vec![u, 1], out_bound));
                params.push(Tensor::zeros(vec![1]).with_grad());
                params.push(uniform(&mut rng, vec![u, 1], out_bound));
                // Start ETa at half of ETx so initial outputs sit inside the
                // clip and receive data gradient.
                params.push(Tensor::full(vec![1], 0.5).with_grad());
            }
            NetworkKind::Direct => {
                params.push(uniform(&mut rng, vec![u, 1], out_bound));
                params.push(Tensor::zeros(vec![1]).with_grad());
            }
        }
        Ok(Self {
            kind,
            config,
            modality,
            params,
            bn_stats: None,
            scaler,
        })
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        const BASE: [&str; 10] = [
            "lstm.weight", "lstm.bias", "head.weight", "head.bias", "bn.gamma", "bn.beta",
            "ky.weight", "ky.bias", "eta.weight", "eta.bias",
        ];
        const DIRECT: [&str; 8] = [
            "lstm.weight", "lstm.bias", "head.weight", "head.bias", "bn.gamma", "bn.beta",
            "out.weight", "out.bias",
        ];
        match self.kind {
            NetworkKind::PhysicsInformed => &BASE,
            NetworkKind::Direct => &DIRECT,
        }
    }

    /// Puts every parameter on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p)).collect()
    }

    /// Standardises and masks equal-length pixels into a batch.
    pub fn make_batch(&self, samples: &[&PixelSample]) -> Result<Batch, ModelError> {
        let first = samples.first().ok_or(ModelError::Empty)?;
        let steps = first.len();
        if let Some(s) = samples.iter().find(|s| s.len() != steps) {
            return Err(ModelError::LengthMismatch(format!(
                "pixel {} has {} steps, batch has {steps}",
                s.pixel_id,
                s.len()
            )));
        }
        let b = samples.len();
        let mut inputs = Vec::with_capacity(steps);
        let mut etx = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut x = Vec::with_capacity(b * N_FEATURES);
            for s in samples {
                let f = s.features(t);
                for j in 0..N_FEATURES {
                    x.push(if self.modality.uses(j) {
                        (f[j] - self.scaler.mean[j]) / self.scaler.sd[j]
                    } else {
                        0.0
                    });
                }
            }
            inputs.push(Tensor::new(vec![b, N_FEATURES], x)?);
            etx.push(samples.iter().map(|s| s.etx_sim[t]).collect());
        }
        Ok(Batch {
            inputs,
            etx,
            targets: samples.iter().map(|s| s.target_yl).collect(),
        })
    }

    /// Shared path: linear, batch norm, ReLU, dropout. Train mode also
    /// returns the batch moments for the running-statistics update.
    pub fn head_path(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        hidden: Var,
        mode: &mut Mode<'_>,
    ) -> Result<(Var, Option<BatchMoments>), ModelError> {
        let width = tape.shape(hidden).get(1).copied().unwrap_or(0);
        if width != self.config.hidden {
            return Err(ModelError::FeatureWidth {
                expected: self.config.hidden,
                actual: width,
            });
        }
        let lin = tape.matmul(hidden, vars[HEAD_W])?;
        let lin = tape.add(lin, vars[HEAD_B])?;
        let (xhat, moments) = match mode {
            Mode::Train(_) => {
                let (xhat, m) = batch_norm_train(tape, lin, self.config.bn_eps)?;
                (xhat, Some(m))
            }
            Mode::Eval => {
                let stats = self.bn_stats.as_ref().ok_or(ModelError::UninitializedStats)?;
                let u = stats.mean.len();
                let mean = tape.constant(vec![u], stats.mean.clone())?;
                let inv: Vec<f64> = stats
                    .var
                    .iter()
                    .map(|v| 1.0 / (v + self.config.bn_eps).sqrt())
                    .collect();
                let inv = tape.constant(vec![u], inv)?;
                let centred = tape.sub(lin, mean)?;
                (tape.mul(centred, inv)?, None)
            }
        };
        let y = tape.mul(xhat, vars[BN_GAMMA])?;
        let y = tape.add(y, vars[BN_BETA])?;
        let mut path = tape.relu(y);
        if let Mode::Train(rng) = mode {
            let rate = self.config.dropout;
            if rate > 0.0 {
                let keep = 1.0 / (1.0 - rate);
                let shape = tape.shape(path).to_vec();
                let n: usize = shape.iter().product();
                let mask = (0..n)
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                let mask = tape.constant(shape, mask)?;
                path = tape.mul(path, mask)?;
            }
        }
        Ok((path, moments))
    }

    /// Ky (softplus) and the raw ETa head output for stacked hidden states.
    pub fn head_forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        hidden: Var,
        mode: &mut Mode<'_>,
    ) -> Result<(Var, Var, Option<BatchMoments>), ModelError> {
        if self.kind != NetworkKind::PhysicsInformed {
            return Err(ModelError::BadConfig("Ky/ETa heads need a physics-informed network".into()));
        }
        let (path, moments) = self.head_path(tape, vars, hidden, mode)?;
        let ky = tape.matmul(path, vars[OUT_A_W])?;
        let ky = tape.add(ky, vars[OUT_A_B])?;
        let ky = tape.softplus(ky);
        let eta = tape.matmul(path, vars[OUT_B_W])?;
        let eta = tape.add(eta, vars[OUT_B_B])?;
        Ok((ky, eta, moments))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &Batch,
        mode: &mut Mode<'_>,
    ) -> Result<Forward, ModelError> {
        let inputs: Vec<Var> = batch.inputs.iter().map(|x| tape.leaf(x)).collect();
        let hs = lstm_forward(tape, vars[LSTM_W], vars[LSTM_B], &inputs)?;
        let mut out = Forward {
            ky: Vec::new(),
            eta_fraction: Vec::new(),
            eta: Vec::new(),
            yl: Vec::new(),
            moments: Vec::new(),
        };
        // The head runs once over all steps stacked time-major, so batch
        // norm sees every (pixel, step) row of the batch.
        let b = batch.size();
        let stacked = tape.concat_rows(&hs)?;
        let rows = |tape: &mut Tape, v: Var| -> Result<Vec<Var>, ModelError> {
            (0..hs.len())
                .map(|t| Ok(tape.slice_rows(v, t * b, (t + 1) * b)?))
                .collect()
        };
        match self.kind {
            NetworkKind::PhysicsInformed => {
                let (ky, eta, m) = self.head_forward(tape, vars, stacked, mode)?;
                out.ky = rows(tape, ky)?;
                // The ETa head predicts a fraction of the step's ETx.
                out.eta_fraction = rows(tape, eta)?;
                for (t, &frac) in out.eta_fraction.iter().enumerate() {
                    let x = tape.constant(vec![b, 1], batch.etx[t].clone())?;
                    out.eta.push(tape.mul(frac, x)?);
                }
                out.moments.extend(m);
                out.yl = compose_on_tape(tape, &out.ky, &out.eta, &batch.etx)?;
            }
            NetworkKind::Direct => {
                let (path, m) = self.head_path(tape, vars, stacked, mode)?;
                let y = tape.matmul(path, vars[OUT_A_W])?;
                let y = tape.add(y, vars[OUT_A_B])?;
                let y = tape.sigmoid(y);
                out.yl = rows(tape, y)?;
                out.moments.extend(m);
            }
        }
        Ok(out)
    }

    /// Folds per-step batch moments into the running statistics, using the
    /// unbiased variance. The first update seeds the statistics.
    pub fn update_running_stats(&mut self, moments: &[BatchMoments]) {
        let m = self.config.bn_momentum;
        for bm in moments {
            let unbias = if bm.count > 1 {
                bm.count as f64 / (bm.count as f64 - 1.0)
            } else {
                1.0
            };
            let var: Vec<f64> = bm.var.iter().map(|v| v * unbias).collect();
            match &mut self.bn_stats {
                None => {
                    self.bn_stats = Some(RunningStats {
                        mean: bm.mean.clone(),
                        var,
                    })
                }
                Some(rs) => {
                    for (r, b) in rs.mean.iter_mut().zip(&bm.mean) {
                        *r = (1.0 - m) * *r + m * b;
                    }
                    for (r, b) in rs.var.iter_mut().zip(&var) {
                        *r = (1.0 - m) * *r + m * b;
                    }
                }
            }
        }
    }

    /// Eval-mode predictions; pixels are batched by sequence length.
    pub fn predict(&self, samples: &[&PixelSample]) -> Result<Vec<ModelOutput>, ModelError> {
        const CHUNK: usize = 256;
        let mut out: Vec<Option<ModelOutput>> = vec![None; samples.len()];
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by_key(|&i| samples[i].len());
        let mut start = 0;
        while start < order.len() {
            let steps = samples[order[start]].len();
            let mut end = start;
            while end < order.len() && end - start < CHUNK && samples[order[end]].len() == steps {
                end += 1;
            }
            let idx = &order[start..end];
            let chunk: Vec<&PixelSample> = idx.iter().map(|&i| samples[i]).collect();
            let batch = self.make_batch(&chunk)?;
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let fwd = self.forward(&mut tape, &vars, &batch, &mut Mode::Eval)?;
            for (row, &i) in idx.iter().enumerate() {
                let pick = |v: &[Var], scale: f64| -> Vec<f64> {
                    v.iter().map(|&x| tape.value(x)[row] * scale).collect()
                };
                let yl_t = pick(&fwd.yl, 1.0);
                out[i] = Some(ModelOutput {
                    ky_t: pick(&fwd.ky, 1.0),
                    eta_t: pick(&fwd.eta, 1.0),
                    yl_final: *yl_t.last().expect("non-empty sequence"),
                    yl_t,
                });
            }
            start = end;
        }
        Ok(out.into_iter().map(|o| o.expect("every pixel predicted")).collect())
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }
}

/// Normalises `[B, U]` values with their own per-unit batch moments.
pub fn batch_norm_train(tape: &mut Tape, x: Var, eps: f64) -> Result<(Var, BatchMoments), ModelError> {
    let mean = tape.mean_rows(x)?;
    let centred = tape.sub(x, mean)?;
    let sq = tape.square(centred);
    let var = tape.mean_rows(sq)?;
    let moments = BatchMoments {
        mean: tape.value(mean).to_vec(),
        var: tape.value(var).to_vec(),
        count: tape.shape(x)[0],
    };
    let denom = tape.affine(var, 1.0, eps);
    let denom = tape.sqrt(denom);
    Ok((tape.div(centred, denom)?, moments))
}

/// LSTM over `[B, F]` inputs from a zero state. `weight` is `[F + H, 4H]`
/// acting on `[x, h]`, gate columns ordered input, forget, cell, output.
pub fn lstm_forward(tape: &mut Tape, weight: Var, bias: Var, inputs: &[Var]) -> Result<Vec<Var>, ModelError> {
    let first = *inputs.first().ok_or(ModelError::Empty)?;
    let ws = tape.shape(weight).to_vec();
    if ws.len() != 2 || ws[1] % 4 != 0 || ws[1] == 0 {
        return Err(ModelError::BadConfig(format!("LSTM weight shape {ws:?}")));
    }
    let h = ws[1] / 4;
    let f = ws[0].checked_sub(h).unwrap_or(0);
    let b = tape.shape(first)[0];
    let mut hidden = tape.constant(vec![b, h], vec![0.0; b * h])?;
    let mut cell = tape.constant(vec![b, h], vec![0.0; b * h])?;
    let mut states = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let xs = tape.shape(x);
        if xs.len() != 2 || xs[1] != f {
            return Err(ModelError::FeatureWidth {
                expected: f,
                actual: xs.get(1).copied().unwrap_or(0),
            });
        }
        if xs[0] != b {
            return Err(ModelError::LengthMismatch(format!("batch {} vs {b}", xs[0])));
        }
        let xh = tape.concat_cols(&[x, hidden])?;
        let z = tape.matmul(xh, weight)?;
        let z = tape.add(z, bias)?;
        let i = tape.slice_cols(z, 0, h)?;
        let i = tape.sigmoid(i);
        let fg = tape.slice_cols(z, h, 2 * h)?;
        let fg = tape.sigmoid(fg);
        let g = tape.slice_cols(z, 2 * h, 3 * h)?;
        let g = tape.tanh(g);
        let o = tape.slice_cols(z, 3 * h, 4 * h)?;
        let o = tape.sigmoid(o);
        let keep = tape.mul(fg, cell)?;
        let write = tape.mul(i, g)?;
        cell = tape.add(keep, write)?;
        let tc = tape.tanh(cell);
        hidden = tape.mul(o, tc)?;
        states.push(hidden);
    }
    Ok(states)
}
