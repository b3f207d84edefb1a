//! Pixel time series, early fusion, synthetic generation and grouped splits.

mod csv_io;
mod fusion;
mod split;
mod synth;

pub use csv_io::{ingest_csv, read_csv, read_weather_csv, write_csv, write_et_csv, CSV_HEADER, ET_HEADER, WEATHER_HEADER};
pub use fusion::{aggregate_windows, early_fuse};
pub use split::{kfold_split, Fold};
pub use synth::{synth_generate, PixelTruth, SynthConfig, SyntheticDataset, BAND_GAINS, BAND_OFFSETS};

use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::fao56::Fao56Error;

pub const N_BANDS: usize = 10;
pub const N_WEATHER: usize = 2;
/// Model input width: spectral bands followed by precipitation and temperature.
pub const N_FEATURES: usize = N_BANDS + N_WEATHER;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {detail}")]
    Schema { line: u64, detail: String },
    #[error("line {line}, column {column}: {detail}")]
    Invalid {
        line: u64,
        column: String,
        detail: String,
    },
    #[error("invalid sample {pixel}: {detail}")]
    InvalidSample { pixel: String, detail: String },
    #[error("invalid observation dates: {0}")]
    BadDates(String),
    #[error("{fields} distinct fields cannot form {k} folds")]
    TooFewFields { fields: usize, k: usize },
    #[error("invalid synthetic configuration: {0}")]
    BadConfig(String),
    #[error("dataset is empty")]
    Empty,
    #[error("relative yield loss: {0}")]
    BadYield(String),
    #[error(transparent)]
    Fao56(#[from] Fao56Error),
}

/// One pixel's fused time series and its relative yield-loss target.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSample {
    pub field_id: String,
    pub pixel_id: String,
    /// Days after sowing of each observation, strictly increasing.
    pub timestamps: Vec<u32>,
    /// Reflectance per observation and band.
    pub spectral: Vec<[f64; N_BANDS]>,
    /// Precipitation sum (mm) and mean temperature (°C) per window.
    pub weather_fused: Vec<[f64; N_WEATHER]>,
    /// Simulated ETx summed over each window, mm.
    pub etx_sim: Vec<f64>,
    pub target_yl: f64,
}

impl PixelSample {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |detail: String| DatasetError::InvalidSample {
            pixel: format!("{}/{}", self.field_id, self.pixel_id),
            detail,
        };
        let t = self.timestamps.len();
        if t < 2 {
            return Err(bad(format!("needs at least 2 timesteps, got {t}")));
        }
        if self.spectral.len() != t || self.weather_fused.len() != t || self.etx_sim.len() != t {
            return Err(bad("series lengths differ".into()));
        }
        if !self.timestamps.windows(2).all(|w| w[0] < w[1]) {
            return Err(bad("timestamps not strictly increasing".into()));
        }
        if let Some(v) = self.spectral.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(format!("reflectance {v} outside [0, 1]")));
        }
        if self.weather_fused.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite weather feature".into()));
        }
        if let Some(v) = self.etx_sim.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(bad(format!("etx {v} must be finite and >= 0")));
        }
        if !(0.0..=1.0).contains(&self.target_yl) {
            return Err(bad(format!("target {} outside [0, 1]", self.target_yl)));
        }
        Ok(())
    }

    /// Feature row for timestep `t`: bands then weather.
    pub fn features(&self, t: usize) -> [f64; N_FEATURES] {
        let mut row = [0.0; N_FEATURES];
        row[..N_BANDS].copy_from_slice(&self.spectral[t]);
        row[N_BANDS..].copy_from_slice(&self.weather_fused[t]);
        row
    }
}

/// A validated collection of pixel samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDataset {
    samples: Vec<PixelSample>,
    fields: Vec<String>,
    provenance: String,
}

impl FieldDataset {
    /// Validates the samples; provenance is a digest of their content.
    pub fn new(samples: Vec<PixelSample>) -> Result<Self, DatasetError> {
        if samples.is_empty() {
            return Err(DatasetError::Empty);
        }
        for s in &samples {
            s.validate()?;
        }
        let fields: BTreeSet<&str> = samples.iter().map(|s| s.field_id.as_str()).collect();
        let fields = fields.into_iter().map(str::to_owned).collect();
        let provenance = content_digest(&samples);
        Ok(Self {
            samples,
            fields,
            provenance,
        })
    }

    pub fn samples(&self) -> &[PixelSample] {
        &self.samples
    }

    /// Sorted distinct field identifiers.
    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Longest series length.
    pub fn max_len(&self) -> usize {
        self.samples.iter().map(PixelSample::len).max().unwrap_or(0)
    }
}

fn content_digest(samples: &[PixelSample]) -> String {
    let mut h = Sha256::new();
    let put_str = |h: &mut Sha256, s: &str| {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    };
    for s in samples {
        put_str(&mut h, &s.field_id);
        put_str(&mut h, &s.pixel_id);
        h.update((s.len() as u64).to_le_bytes());
        for t in 0..s.len() {
            h.update(s.timestamps[t].to_le_bytes());
            for v in s.features(t).iter().chain(std::iter::once(&s.etx_sim[t])) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.update(s.target_yl.to_bits().to_le_bytes());
    }
    format!("sha256:{}", hex::encode(h.finalize()))
}

/// Relative yield loss `1 − ya / yx` against a yield potential `yx`.
pub fn relative_yield_loss(ya: f64, yx: f64) -> Result<f64, DatasetError> {
    if !(yx > 0.0 && yx.is_finite()) {
        return Err(DatasetError::BadYield(format!("potential {yx} must be positive")));
    }
    if !(ya >= 0.0) {
        return Err(DatasetError::BadYield(format!("yield {ya} must be >= 0")));
    }
    if ya > yx {
        return Err(DatasetError::BadYield(format!(
            "yield {ya} exceeds potential {yx}"
        )));
    }
    Ok(1.0 - ya / yx)
}

/// Relative losses using each field's maximum yield as its potential.
/// `records` pairs a field identifier with an actual yield.
pub fn field_relative_losses(records: &[(String, f64)]) -> Result<Vec<f64>, DatasetError> {
    let mut potential = std::collections::BTreeMap::<&str, f64>::new();
    for (f, y) in records {
        let e = potential.entry(f.as_str()).or_insert(f64::NEG_INFINITY);
        *e = e.max(*y);
    }
    records
        .iter()
        .map(|(f, y)| relative_yield_loss(*y, potential[f.as_str()]))
        .collect()
}
