use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ModelKind, TrainConfig};
use super::optim::Optimizer;
use super::{substream_seed, HarnessError};
use crate::dataset::{FieldDataset, PixelSample};
use crate::loss::{data_loss, physics_loss, physics_penalty, total_loss, LossWeights};
use crate::model::{Batch, BatchMoments, FeatureScaler, Mode, Network, NetworkKind};
use crate::tensor::{Tape, Var};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParts {
    pub data: f64,
    pub physics: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossParts,
    pub validation: Option<LossParts>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub log: Vec<EpochLog>,
    /// Epoch whose loss went non-finite; the network is from the epoch before.
    pub diverged_at: Option<usize>,
}

pub struct Objective {
    pub total: Var,
    pub data: f64,
    pub physics: f64,
    pub moments: Vec<BatchMoments>,
}

/// Training objective of one batch. The direct baseline fits the data term
/// only; the physics-informed network adds the ETa bound penalty.
pub fn batch_objective(
    net: &Network,
    tape: &mut Tape,
    vars: &[Var],
    batch: &Batch,
    weights: LossWeights,
    mode: &mut Mode<'_>,
) -> Result<Objective, HarnessError> {
    let fwd = net.forward(tape, vars, batch, mode)?;
    let last = *fwd.yl.last().ok_or(crate::model::ModelError::Empty)?;
    let data = data_loss(tape, last, &batch.targets)?;
    let data_v = tape.item(data);
    match net.kind {
        NetworkKind::PhysicsInformed => {
            // Bounds are checked on ETa/ETx so every step weighs the same.
            let frac = tape.concat_rows(&fwd.eta_fraction)?;
            let phys = physics_loss(tape, frac, &vec![1.0; batch.size() * batch.steps()])?;
            let phys_v = tape.item(phys);
            let total = total_loss(tape, data, phys, weights)?;
            Ok(Objective {
                total,
                data: data_v,
                physics: phys_v,
                moments: fwd.moments,
            })
        }
        NetworkKind::Direct => Ok(Objective {
            total: data,
            data: data_v,
            physics: 0.0,
            moments: fwd.moments,
        }),
    }
}

/// Shuffles, groups by sequence length and chunks. A trailing single pixel
/// joins the previous chunk so batch norm never sees a batch of one when
/// that can be avoided.
pub fn make_batches(indices: &[usize], lens: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.sort_by_key(|&i| lens[i]);
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let len = lens[order[start]];
        let end = start + order[start..].iter().take_while(|&&i| lens[i] == len).count();
        let group = &order[start..end];
        let first_chunk = out.len();
        for chunk in group.chunks(batch_size) {
            if chunk.len() == 1 && out.len() > first_chunk {
                out.last_mut().expect("previous chunk").push(chunk[0]);
            } else {
                out.push(chunk.to_vec());
            }
        }
        start = end;
    }
    out
}

pub fn network_kind(model: ModelKind) -> Result<NetworkKind, HarnessError> {
    match model {
        ModelKind::PiRnn => Ok(NetworkKind::PhysicsInformed),
        ModelKind::RnnBaseline => Ok(NetworkKind::Direct),
        ModelKind::Simulation => Err(HarnessError::Config("the simulation baseline has nothing to train".into())),
    }
}

/// Eval-mode loss components over a pixel set.
pub fn evaluate_losses(net: &Network, samples: &[&PixelSample], weights: LossWeights) -> Result<LossParts, HarnessError> {
    let out = net.predict(samples)?;
    let mut data = 0.0;
    let (mut phys, mut n_phys) = (0.0, 0.0);
    for (o, s) in out.iter().zip(samples) {
        data += (o.yl_final - s.target_yl).powi(2);
        if net.kind == NetworkKind::PhysicsInformed {
            for (eta, etx) in o.eta_t.iter().zip(&s.etx_sim) {
                phys += physics_penalty(eta / etx, 1.0);
                n_phys += 1.0;
            }
        }
    }
    let data = data / samples.len() as f64;
    let physics = if n_phys > 0.0 { phys / n_phys } else { 0.0 };
    let total = match net.kind {
        NetworkKind::PhysicsInformed => weights.lambda1 * data + weights.lambda2 * physics,
        NetworkKind::Direct => data,
    };
    Ok(LossParts { data, physics, total })
}

/// Mini-batch training on `train_idx`, logging validation losses on
/// `val_idx` when it is non-empty.
pub fn train(
    cfg: &TrainConfig,
    dataset: &FieldDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(HarnessError::Config("no training pixels".into()));
    }
    let kind = network_kind(cfg.model)?;
    let weights = cfg.loss_weights()?;
    let samples = dataset.samples();
    let train_px: Vec<&PixelSample> = train_idx.iter().map(|&i| &samples[i]).collect();
    let val_px: Vec<&PixelSample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let scaler = FeatureScaler::fit(train_px.iter().copied())?;
    let mut net = Network::new(
        kind,
        cfg.network_config(),
        cfg.modality,
        scaler,
        substream_seed(seed, STREAM_INIT),
    )?;
    let mut optim = Optimizer::new(cfg, &net.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, STREAM_SHUFFLE));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, STREAM_DROPOUT));
    let lens: Vec<usize> = samples.iter().map(PixelSample::len).collect();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut last_good = net.clone();
    for epoch in 1..=cfg.epochs {
        let (mut sd, mut sp, mut st, mut count) = (0.0, 0.0, 0.0, 0.0);
        let mut finite = true;
        for chunk in make_batches(train_idx, &lens, cfg.batch_size, &mut shuffle_rng) {
            let px: Vec<&PixelSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let batch = net.make_batch(&px)?;
            let mut tape = Tape::new();
            let vars = net.bind(&mut tape);
            let obj = batch_objective(&net, &mut tape, &vars, &batch, weights, &mut Mode::Train(&mut dropout_rng))?;
            let total = tape.item(obj.total);
            if !total.is_finite() {
                finite = false;
                break;
            }
            let b = px.len() as f64;
            sd += obj.data * b;
            sp += obj.physics * b;
            st += total * b;
            count += b;
            let grads = tape.backward(obj.total)?;
            let g: Vec<Vec<f64>> = vars
                .iter()
                .zip(&net.params)
                .map(|(&v, p)| grads.wrt(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
                .collect();
            optim.step(&mut net.params, &g);
            net.update_running_stats(&obj.moments);
        }
        if !finite || net.params.iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
            return Ok(TrainOutcome {
                network: last_good,
                log,
                diverged_at: Some(epoch),
            });
        }
        let validation = if val_px.is_empty() {
            None
        } else {
            Some(evaluate_losses(&net, &val_px, weights)?)
        };
        log.push(EpochLog {
            epoch,
            train: LossParts {
                data: sd / count,
                physics: sp / count,
                total: st / count,
            },
            validation,
        });
        last_good = net.clone();
    }
    Ok(TrainOutcome {
        network: net,
        log,
        diverged_at: None,
    })
}

pub fn write_log_csv<W: std::io::Write>(log: &[EpochLog], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "L_l", "L_phys", "L_total", "val_L_l", "val_L_phys", "val_L_total"])?;
    for e in log {
        let mut row = vec![
            e.epoch.to_string(),
            e.train.data.to_string(),
            e.train.physics.to_string(),
            e.train.total.to_string(),
        ];
        match &e.validation {
            Some(v) => row.extend([v.data.to_string(), v.physics.to_string(), v.total.to_string()]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_indices_and_avoid_singletons() {
        let lens = vec![3, 3, 3, 3, 3, 4, 4, 3, 4, 3, 3];
        let idx: Vec<usize> = (0..lens.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = make_batches(&idx, &lens, 4, &mut rng);
        let mut all: Vec<usize> = b.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, idx);
        for chunk in &b {
            assert!(chunk.len() >= 2);
            assert!(chunk.iter().all(|&i| lens[i] == lens[chunk[0]]));
        }
    }
}
