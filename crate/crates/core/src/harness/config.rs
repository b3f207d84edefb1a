use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::loss::LossWeights;
use crate::model::{Modality, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    RnnBaseline,
    PiRnn,
    Simulation,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::RnnBaseline, ModelKind::PiRnn, ModelKind::Simulation];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RnnBaseline => "rnn-baseline",
            ModelKind::PiRnn => "pi-rnn",
            ModelKind::Simulation => "simulation",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model {s:?} (pi-rnn | rnn-baseline | simulation)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(format!("unknown optimizer {s:?} (adam | sgd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub momentum: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub folds: usize,
    pub seed: u64,
    pub modality: Modality,
    pub model: ModelKind,
    pub hidden: usize,
    pub head_units: usize,
    pub dropout: f64,
    /// Ky used by the simulation baseline.
    pub ky_fixed: f64,
    /// Nominal bucket of the simulation baseline.
    pub sim_taw: f64,
    pub sim_depletion_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            momentum: 0.0,
            lambda1: 1.0,
            lambda2: 0.1,
            folds: 10,
            seed: 0,
            modality: Modality::SpectralWeather,
            model: ModelKind::PiRnn,
            hidden: 64,
            head_units: 128,
            dropout: 0.1,
            ky_fixed: 1.0,
            sim_taw: 100.0,
            sim_depletion_fraction: 0.55,
        }
    }
}

pub const CONFIG_KEYS: [&str; 20] = [
    "epochs", "batch-size", "learning-rate", "optimizer", "beta1", "beta2", "adam-eps", "momentum",
    "lambda1", "lambda2", "folds", "seed", "modality", "model", "hidden", "head-units", "dropout",
    "ky-fixed", "sim-taw", "sim-depletion-fraction",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| HarnessError::Config(format!("{key} = {value:?}: {e}")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        match key {
            "epochs" => self.epochs = parse(key, v)?,
            "batch-size" => self.batch_size = parse(key, v)?,
            "learning-rate" => self.learning_rate = parse(key, v)?,
            "optimizer" => self.optimizer = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "adam-eps" => self.adam_eps = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "lambda1" => self.lambda1 = parse(key, v)?,
            "lambda2" => self.lambda2 = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "modality" => self.modality = parse(key, v)?,
            "model" => self.model = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "head-units" => self.head_units = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "ky-fixed" => self.ky_fixed = parse(key, v)?,
            "sim-taw" => self.sim_taw = parse(key, v)?,
            "sim-depletion-fraction" => self.sim_depletion_fraction = parse(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| HarnessError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let m = |o: OptimizerKind| match o {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        };
        let values = [
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.learning_rate.to_string(),
            m(self.optimizer).to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.adam_eps.to_string(),
            self.momentum.to_string(),
            self.lambda1.to_string(),
            self.lambda2.to_string(),
            self.folds.to_string(),
            self.seed.to_string(),
            self.modality.name().to_string(),
            self.model.name().to_string(),
            self.hidden.to_string(),
            self.head_units.to_string(),
            self.dropout.to_string(),
            self.ky_fixed.to_string(),
            self.sim_taw.to_string(),
            self.sim_depletion_fraction.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch-size must be >= 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning-rate must be finite and >= 0");
        }
        if self.folds < 2 {
            return bad("folds must be >= 2");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must be in [0, 1) and eps > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.ky_fixed > 0.0) || !(self.sim_taw > 0.0) || !(0.0..1.0).contains(&self.sim_depletion_fraction) {
            return bad("simulation baseline needs ky-fixed > 0, sim-taw > 0, depletion fraction in [0, 1)");
        }
        self.loss_weights()?;
        self.network_config().validate()?;
        Ok(())
    }

    pub fn loss_weights(&self) -> Result<LossWeights, HarnessError> {
        Ok(LossWeights::new(self.lambda1, self.lambda2)?)
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            hidden: self.hidden,
            head_units: self.head_units,
            dropout: self.dropout,
            ..NetworkConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.apply_text("# demo\nepochs = 3\nmodality = weather  # inline\nmodel=rnn-baseline\nlambda2 = 0\n")
            .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.modality, Modality::Weather);
        assert_eq!(cfg.model, ModelKind::RnnBaseline);
        let mut back = TrainConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_lines_are_reported() {
        let mut cfg = TrainConfig::default();
        let e = cfg.apply_text("epochs = 2\nfolds\n").unwrap_err();
        assert!(e.to_string().contains("line 2"));
        assert!(cfg.set("colour", "red").is_err());
        assert!(cfg.set("epochs", "-1").is_err());
        cfg.set("folds", "1").unwrap();
        assert!(cfg.validate().is_err());
    }
}
