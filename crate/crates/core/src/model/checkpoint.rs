use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureScaler, Modality, ModelError, Network, NetworkConfig, NetworkKind, RunningStats};
use crate::dataset::N_FEATURES;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "pirnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON container for a trained network and the dataset it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: NetworkKind,
    pub modality: Modality,
    pub config: NetworkConfig,
    pub scaler: FeatureScaler,
    pub bn_stats: Option<RunningStats>,
    pub params: Vec<NamedTensor>,
    pub provenance: String,
}

impl Checkpoint {
    pub fn from_network(net: &Network, provenance: &str) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: net.kind,
            modality: net.modality,
            config: net.config,
            scaler: net.scaler.clone(),
            bn_stats: net.bn_stats.clone(),
            params: net
                .param_names()
                .iter()
                .zip(&net.params)
                .map(|(name, t)| NamedTensor {
                    name: (*name).into(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
            provenance: provenance.into(),
        }
    }

    pub fn to_network(&self) -> Result<Network, ModelError> {
        let bad = |m: String| ModelError::BadCheckpoint(m);
        if self.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", self.version)));
        }
        if self.scaler.mean.len() != N_FEATURES || self.scaler.sd.len() != N_FEATURES {
            return Err(bad("feature scaler must have 12 entries".into()));
        }
        // A fresh network supplies the expected names and shapes.
        let mut net = Network::new(self.kind, self.config, self.modality, self.scaler.clone(), 0)?;
        if self.params.len() != net.params.len() {
            return Err(bad(format!("expected {} tensors, found {}", net.params.len(), self.params.len())));
        }
        let names = net.param_names();
        for (i, nt) in self.params.iter().enumerate() {
            if nt.name != names[i] || nt.shape != net.params[i].shape() {
                return Err(bad(format!(
                    "tensor {i}: expected {} {:?}, found {} {:?}",
                    names[i],
                    net.params[i].shape(),
                    nt.name,
                    nt.shape
                )));
            }
            if nt.data.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("tensor {} has non-finite values", nt.name)));
            }
            net.params[i] = Tensor::new(nt.shape.clone(), nt.data.clone())?.with_grad();
        }
        if let Some(rs) = &self.bn_stats {
            let u = self.config.head_units;
            if rs.mean.len() != u || rs.var.len() != u || rs.var.iter().any(|v| !(*v >= 0.0)) {
                return Err(bad("malformed batch-norm running statistics".into()));
            }
        }
        net.bn_stats = self.bn_stats.clone();
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
