//! Training loop, grouped cross-validation and comparison reports.

mod config;
mod cv;
mod optim;
mod report;
mod train;

pub use config::{ModelKind, OptimizerKind, TrainConfig, CONFIG_KEYS};
pub use cv::{cross_validate, simulation_trajectories, Aggregate, EvalReport, FoldReport, HorizonPoint, MeanSd, PhysicsCheck};
pub use optim::Optimizer;
pub use report::{emit_trajectories, report_tables, ComparisonTable, TableRow};
pub use train::{
    batch_objective, evaluate_losses, make_batches, network_kind, train, write_log_csv, EpochLog, LossParts,
    Objective, TrainOutcome,
};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::fao56::Fao56Error;
use crate::loss::LossError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset provenance mismatch: expected {expected}, found {found}")]
    ProvenanceMismatch { expected: String, found: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Fao56(#[from] Fao56Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Independent seed for a named purpose derived from a run seed.
pub fn substream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}
