use std::fmt::Write as _;

use super::config::ModelKind;
use super::cv::EvalReport;
use super::HarnessError;
use crate::dataset::FieldDataset;
use crate::model::{Checkpoint, Modality};

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: ModelKind,
    pub modality: Modality,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    /// R² gain over the weather-only run of the same model, when present.
    pub delta_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

fn model_rank(m: ModelKind) -> usize {
    ModelKind::ALL.iter().position(|&k| k == m).unwrap_or(usize::MAX)
}

fn modality_rank(m: Modality) -> usize {
    Modality::ALL.iter().position(|&k| k == m).unwrap_or(usize::MAX)
}

/// Model × modality table of aggregate metrics. All reports must come from
/// the same dataset.
pub fn report_tables(reports: &[EvalReport]) -> Result<ComparisonTable, HarnessError> {
    let first = reports
        .first()
        .ok_or_else(|| HarnessError::Config("no reports to tabulate".into()))?;
    if let Some(r) = reports.iter().find(|r| r.provenance != first.provenance) {
        return Err(HarnessError::ProvenanceMismatch {
            expected: first.provenance.clone(),
            found: r.provenance.clone(),
        });
    }
    let mut rows: Vec<TableRow> = reports
        .iter()
        .map(|r| TableRow {
            model: r.config.model,
            modality: r.config.modality,
            mae: r.aggregate.mae.mean,
            rmse: r.aggregate.rmse.mean,
            r2: r.aggregate.r2.mean,
            delta_r2: None,
        })
        .collect();
    rows.sort_by_key(|r| (model_rank(r.model), modality_rank(r.modality)));
    let weather: Vec<(ModelKind, f64)> = rows
        .iter()
        .filter(|r| r.modality == Modality::Weather)
        .map(|r| (r.model, r.r2))
        .collect();
    for row in &mut rows {
        row.delta_r2 = weather.iter().find(|(m, _)| *m == row.model).map(|(_, w)| row.r2 - w);
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "modality", "mae", "rmse", "r2", "delta_r2_vs_weather"])?;
        for r in &self.rows {
            w.write_record([
                r.model.name().to_string(),
                r.modality.name().to_string(),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.r2.to_string(),
                r.delta_r2.map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned text with two decimals.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<14} {:<17} {:>6} {:>6} {:>6} {:>8}\n",
            "model", "modality", "MAE", "RMSE", "R2", "dR2"
        );
        for r in &self.rows {
            let delta = r.delta_r2.map(|d| format!("{d:+.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<14} {:<17} {:>6.2} {:>6.2} {:>6.2} {:>8}",
                r.model.name(),
                r.modality.name(),
                r.mae,
                r.rmse,
                r.r2,
                delta
            );
        }
        s
    }
}

/// Per (pixel, step) rows of Ky, ETa, ETx and composed yield loss.
pub fn emit_trajectories<W: std::io::Write>(
    checkpoint: &Checkpoint,
    dataset: &FieldDataset,
    out: W,
) -> Result<usize, HarnessError> {
    if checkpoint.provenance != dataset.provenance() {
        return Err(HarnessError::ProvenanceMismatch {
            expected: checkpoint.provenance.clone(),
            found: dataset.provenance().to_string(),
        });
    }
    let net = checkpoint.to_network()?;
    let px: Vec<_> = dataset.samples().iter().collect();
    let outputs = net.predict(&px)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["field_id", "pixel_id", "t_index", "day", "ky", "eta_mm", "etx_mm", "yl"])?;
    let mut rows = 0;
    for (s, o) in px.iter().zip(&outputs) {
        for t in 0..s.len() {
            let opt = |v: &[f64]| v.get(t).map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                s.field_id.clone(),
                s.pixel_id.clone(),
                t.to_string(),
                s.timestamps[t].to_string(),
                opt(&o.ky_t),
                opt(&o.eta_t),
                s.etx_sim[t].to_string(),
                o.yl_t[t].to_string(),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
