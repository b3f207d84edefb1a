use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelKind, TrainConfig};
use super::train::train;
use super::{substream_seed, HarnessError};
use crate::dataset::{kfold_split, FieldDataset, Fold, PixelSample};
use crate::fao56::{water_balance, SoilBucket};
use crate::loss::{metrics, MetricsReport};
use crate::model::compose_yield_loss;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mae: MeanSd,
    pub rmse: MeanSd,
    pub r2: MeanSd,
    /// R² of all held-out predictions pooled across folds.
    pub pooled_r2: f64,
}

/// Held-out R² of `yl_t` a fixed number of steps before the last observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPoint {
    pub steps_before_last: usize,
    pub days_before_last: f64,
    pub r2_mean: f64,
    pub r2_pooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsCheck {
    /// Share of held-out steps with `0 <= eta <= etx`.
    pub eta_in_bounds: f64,
    /// Mean `|eta − etx|`, mm.
    pub mean_abs_gap: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub validation_fields: Vec<String>,
    pub metrics: MetricsReport,
    pub horizon_r2: Vec<f64>,
    pub physics: Option<PhysicsCheck>,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: TrainConfig,
    pub provenance: String,
    pub folds: Vec<FoldReport>,
    pub aggregate: Aggregate,
    pub horizons: Vec<HorizonPoint>,
    pub physics: Option<PhysicsCheck>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// Held-out prediction trajectories of one fold.
struct FoldPredictions {
    fold: usize,
    validation: Vec<usize>,
    yl_t: Vec<Vec<f64>>,
    eta_t: Vec<Vec<f64>>,
    diverged_at: Option<usize>,
}

/// Region-level simulation: pixel-mean precipitation and ETx of each field
/// drive one nominal bucket, and Ky is fixed.
pub fn simulation_trajectories(cfg: &TrainConfig, dataset: &FieldDataset) -> Result<BTreeMap<String, Vec<f64>>, HarnessError> {
    let mut by_field: BTreeMap<&str, Vec<&PixelSample>> = BTreeMap::new();
    for s in dataset.samples() {
        by_field.entry(&s.field_id).or_default().push(s);
    }
    let mut out = BTreeMap::new();
    for (field, px) in by_field {
        let steps = px.iter().map(|p| p.len()).min().unwrap_or(0);
        let n = px.len() as f64;
        let mean = |f: &dyn Fn(&PixelSample, usize) -> f64| -> Vec<f64> {
            (0..steps).map(|t| px.iter().map(|p| f(p, t)).sum::<f64>() / n).collect()
        };
        let precip = mean(&|p, t| p.weather_fused[t][0]);
        let etx = mean(&|p, t| p.etx_sim[t]);
        let mut bucket = SoilBucket::new(cfg.sim_taw, cfg.sim_depletion_fraction, 0.0)?;
        let (_, eta) = water_balance(&precip, &etx, &mut bucket)?;
        let yl = compose_yield_loss(&vec![cfg.ky_fixed; steps], &eta, &etx)?;
        out.insert(field.to_string(), yl);
    }
    Ok(out)
}

fn fold_predictions(cfg: &TrainConfig, dataset: &FieldDataset, fold: &Fold) -> Result<FoldPredictions, HarnessError> {
    let samples = dataset.samples();
    match cfg.model {
        ModelKind::Simulation => {
            let sim = simulation_trajectories(cfg, dataset)?;
            let yl_t = fold
                .validation
                .iter()
                .map(|&i| sim[&samples[i].field_id].clone())
                .collect();
            Ok(FoldPredictions {
                fold: fold.index,
                validation: fold.validation.clone(),
                yl_t,
                eta_t: Vec::new(),
                diverged_at: None,
            })
        }
        _ => {
            let seed = substream_seed(cfg.seed, 1000 + fold.index as u64);
            let outcome = train(cfg, dataset, &fold.train, &[], seed)?;
            let px: Vec<&PixelSample> = fold.validation.iter().map(|&i| &samples[i]).collect();
            let out = outcome.network.predict(&px)?;
            let (yl_t, eta_t) = out.into_iter().map(|o| (o.yl_t, o.eta_t)).unzip();
            Ok(FoldPredictions {
                fold: fold.index,
                validation: fold.validation.clone(),
                yl_t,
                eta_t,
                diverged_at: outcome.diverged_at,
            })
        }
    }
}

fn physics_check(pairs: impl Iterator<Item = (f64, f64)>) -> Option<PhysicsCheck> {
    let (mut inside, mut gap, mut n) = (0usize, 0.0, 0usize);
    for (eta, etx) in pairs {
        if (0.0..=etx).contains(&eta) {
            inside += 1;
        }
        gap += (eta - etx).abs();
        n += 1;
    }
    (n > 0).then(|| PhysicsCheck {
        eta_in_bounds: inside as f64 / n as f64,
        mean_abs_gap: gap / n as f64,
        steps: n,
    })
}

/// Grouped K-fold cross-validation of one model/modality configuration.
pub fn cross_validate(cfg: &TrainConfig, dataset: &FieldDataset) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let folds = kfold_split(dataset, cfg.folds, cfg.seed)?;
    let preds = folds
        .par_iter()
        .map(|f| fold_predictions(cfg, dataset, f))
        .collect::<Result<Vec<_>, _>>()?;

    let samples = dataset.samples();
    // Horizons run over the shortest held-out sequence.
    let steps = samples.iter().map(PixelSample::len).min().ok_or(HarnessError::Config("empty dataset".into()))?;
    let at = |yl: &[f64], k: usize| yl[yl.len() - 1 - k];

    let mut fold_reports = Vec::with_capacity(preds.len());
    let (mut all_pred, mut all_true) = (Vec::new(), Vec::new());
    let mut pooled_h: Vec<Vec<f64>> = vec![Vec::new(); steps];
    for p in &preds {
        let truth: Vec<f64> = p.validation.iter().map(|&i| samples[i].target_yl).collect();
        let finals: Vec<f64> = p.yl_t.iter().map(|y| at(y, 0)).collect();
        let m = metrics(&finals, &truth)?;
        let mut horizon_r2 = Vec::with_capacity(steps);
        for (k, pooled) in pooled_h.iter_mut().enumerate() {
            let hp: Vec<f64> = p.yl_t.iter().map(|y| at(y, k)).collect();
            horizon_r2.push(metrics(&hp, &truth)?.r2);
            pooled.extend(hp);
        }
        let physics = physics_check(
            p.validation
                .iter()
                .zip(&p.eta_t)
                .flat_map(|(&i, eta)| eta.iter().copied().zip(samples[i].etx_sim.iter().copied())),
        );
        all_pred.extend(finals);
        all_true.extend(truth);
        fold_reports.push(FoldReport {
            fold: p.fold,
            validation_fields: folds[p.fold].validation_fields.clone(),
            metrics: m,
            horizon_r2,
            physics,
            diverged_at: p.diverged_at,
        });
    }

    let pick = |f: fn(&MetricsReport) -> f64| MeanSd::of(&fold_reports.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let aggregate = Aggregate {
        mae: pick(|m| m.mae),
        rmse: pick(|m| m.rmse),
        r2: pick(|m| m.r2),
        pooled_r2: metrics(&all_pred, &all_true)?.r2,
    };
    let pooled_truth: Vec<f64> = preds
        .iter()
        .flat_map(|p| p.validation.iter().map(|&i| samples[i].target_yl))
        .collect();
    let mut horizons = Vec::with_capacity(steps);
    for (k, pooled) in pooled_h.iter().enumerate() {
        let days: f64 = samples
            .iter()
            .map(|s| f64::from(s.timestamps[s.len() - 1] - s.timestamps[s.len() - 1 - k]))
            .sum::<f64>()
            / samples.len() as f64;
        horizons.push(HorizonPoint {
            steps_before_last: k,
            days_before_last: days,
            r2_mean: fold_reports.iter().map(|r| r.horizon_r2[k]).sum::<f64>() / fold_reports.len() as f64,
            r2_pooled: metrics(pooled, &pooled_truth)?.r2,
        });
    }
    let physics = physics_check(preds.iter().flat_map(|p| {
        p.validation
            .iter()
            .zip(&p.eta_t)
            .flat_map(|(&i, eta)| eta.iter().copied().zip(samples[i].etx_sim.iter().copied()))
    }));

    Ok(EvalReport {
        config: cfg.clone(),
        provenance: dataset.provenance().to_string(),
        folds: fold_reports,
        aggregate,
        horizons,
        physics,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per fold plus the aggregate.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "model", "modality", "n", "mae", "rmse", "r2"])?;
        let model = self.config.model.name();
        let modality = self.config.modality.name();
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                model.into(),
                modality.into(),
                f.metrics.n.to_string(),
                f.metrics.mae.to_string(),
                f.metrics.rmse.to_string(),
                f.metrics.r2.to_string(),
            ])?;
        }
        let n: usize = self.folds.iter().map(|f| f.metrics.n).sum();
        w.write_record([
            "mean".into(),
            model.into(),
            modality.into(),
            n.to_string(),
            self.aggregate.mae.mean.to_string(),
            self.aggregate.rmse.mean.to_string(),
            self.aggregate.r2.mean.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn write_horizons_csv<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["steps_before_last", "days_before_last", "r2_mean", "r2_pooled"])?;
        for h in &self.horizons {
            w.write_record([
                h.steps_before_last.to_string(),
                h.days_before_last.to_string(),
                h.r2_mean.to_string(),
                h.r2_pooled.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
