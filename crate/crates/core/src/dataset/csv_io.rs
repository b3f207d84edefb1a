//! Pixel-series CSV, one row per (pixel, timestep).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DatasetError, FieldDataset, PixelSample, N_BANDS};
use crate::fao56::{EtSeries, WeatherDaily};

pub const CSV_HEADER: [&str; 18] = [
    "field_id", "pixel_id", "t_index", "day", "b01", "b02", "b03", "b04", "b05", "b06", "b07", "b08",
    "b09", "b10", "precip_mm", "temp_c", "etx_mm", "target_yl",
];

pub fn write_csv<W: Write>(dataset: &FieldDataset, out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let mut row: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
    for s in dataset.samples() {
        for t in 0..s.len() {
            row.clear();
            row.push(s.field_id.clone());
            row.push(s.pixel_id.clone());
            row.push(t.to_string());
            row.push(s.timestamps[t].to_string());
            row.extend(s.spectral[t].iter().map(f64::to_string));
            row.extend(s.weather_fused[t].iter().map(f64::to_string));
            row.push(s.etx_sim[t].to_string());
            row.push(s.target_yl.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<FieldDataset, DatasetError> {
    read_csv(File::open(path)?)
}

fn parse_f64(rec: &csv::StringRecord, col: usize, line: u64) -> Result<f64, DatasetError> {
    let raw = &rec[col];
    let v: f64 = raw.trim().parse().map_err(|_| DatasetError::Invalid {
        line,
        column: CSV_HEADER[col].into(),
        detail: format!("cannot parse {raw:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::Invalid {
            line,
            column: CSV_HEADER[col].into(),
            detail: format!("non-finite value {raw}"),
        });
    }
    Ok(v)
}

fn check_range(v: f64, lo: f64, hi: f64, col: usize, line: u64) -> Result<f64, DatasetError> {
    if v < lo || v > hi {
        return Err(DatasetError::Invalid {
            line,
            column: CSV_HEADER[col].into(),
            detail: format!("value {v} outside [{lo}, {hi}]"),
        });
    }
    Ok(v)
}

pub fn read_csv<R: Read>(input: R) -> Result<FieldDataset, DatasetError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(DatasetError::Schema {
            line: 1,
            detail: format!("expected header {}, got {}", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut samples: Vec<PixelSample> = Vec::new();
    let mut record = csv::StringRecord::new();
    while r.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(DatasetError::Schema {
                line,
                detail: format!("expected {} columns, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        let field = record[0].trim();
        let pixel = record[1].trim();
        let t_index: usize = record[2].trim().parse().map_err(|_| DatasetError::Invalid {
            line,
            column: "t_index".into(),
            detail: format!("cannot parse {:?} as an index", &record[2]),
        })?;
        let day: u32 = record[3].trim().parse().map_err(|_| DatasetError::Invalid {
            line,
            column: "day".into(),
            detail: format!("cannot parse {:?} as a day", &record[3]),
        })?;
        let mut bands = [0.0; N_BANDS];
        for (b, out) in bands.iter_mut().enumerate() {
            *out = check_range(parse_f64(&record, 4 + b, line)?, 0.0, 1.0, 4 + b, line)?;
        }
        let precip = check_range(parse_f64(&record, 14, line)?, 0.0, f64::MAX, 14, line)?;
        let temp = parse_f64(&record, 15, line)?;
        let etx = check_range(parse_f64(&record, 16, line)?, 0.0, f64::MAX, 16, line)?;
        let target = check_range(parse_f64(&record, 17, line)?, 0.0, 1.0, 17, line)?;

        let continues = samples
            .last()
            .is_some_and(|s| s.field_id == field && s.pixel_id == pixel);
        if !continues {
            if t_index != 0 {
                return Err(DatasetError::Invalid {
                    line,
                    column: "t_index".into(),
                    detail: format!("pixel {field}/{pixel} must start at t_index 0, got {t_index}"),
                });
            }
            if samples.iter().any(|s| s.field_id == field && s.pixel_id == pixel) {
                return Err(DatasetError::Schema {
                    line,
                    detail: format!("rows of pixel {field}/{pixel} are not contiguous"),
                });
            }
            samples.push(PixelSample {
                field_id: field.into(),
                pixel_id: pixel.into(),
                timestamps: Vec::new(),
                spectral: Vec::new(),
                weather_fused: Vec::new(),
                etx_sim: Vec::new(),
                target_yl: target,
            });
        }
        let s = samples.last_mut().expect("pushed above");
        if t_index != s.len() {
            return Err(DatasetError::Invalid {
                line,
                column: "t_index".into(),
                detail: format!("expected t_index {}, got {t_index}", s.len()),
            });
        }
        if s.timestamps.last().is_some_and(|&prev| day <= prev) {
            return Err(DatasetError::Invalid {
                line,
                column: "day".into(),
                detail: format!("day {day} not after previous observation"),
            });
        }
        if s.target_yl != target {
            return Err(DatasetError::Invalid {
                line,
                column: "target_yl".into(),
                detail: "target differs between rows of one pixel".into(),
            });
        }
        s.timestamps.push(day);
        s.spectral.push(bands);
        s.weather_fused.push([precip, temp]);
        s.etx_sim.push(etx);
    }
    FieldDataset::new(samples)
}

pub const WEATHER_HEADER: [&str; 9] = [
    "day", "t_mean", "t_min", "t_max", "rh_mean", "wind_2m", "net_radiation", "soil_heat_flux", "precipitation",
];

pub const ET_HEADER: [&str; 5] = ["day", "et0", "etx", "ks", "eta"];

/// Daily weather, one row per day since sowing, days consecutive from 0.
pub fn read_weather_csv<R: Read>(input: R) -> Result<Vec<WeatherDaily>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(WEATHER_HEADER.iter().copied()) {
        return Err(DatasetError::Schema {
            line: 1,
            detail: format!("expected header {}", WEATHER_HEADER.join(",")),
        });
    }
    let mut days = Vec::new();
    let mut record = csv::StringRecord::new();
    while r.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != WEATHER_HEADER.len() {
            return Err(DatasetError::Schema {
                line,
                detail: format!("expected {} columns, got {}", WEATHER_HEADER.len(), record.len()),
            });
        }
        let mut v = [0.0; 9];
        for (c, out) in v.iter_mut().enumerate() {
            let raw = record[c].trim();
            *out = raw.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| DatasetError::Invalid {
                line,
                column: WEATHER_HEADER[c].into(),
                detail: format!("cannot parse {raw:?} as a finite number"),
            })?;
        }
        if v[0] != days.len() as f64 {
            return Err(DatasetError::Invalid {
                line,
                column: "day".into(),
                detail: format!("expected day {}, got {}", days.len(), v[0]),
            });
        }
        let w = WeatherDaily {
            t_mean: v[1],
            t_min: v[2],
            t_max: v[3],
            rh_mean: v[4],
            wind_2m: v[5],
            net_radiation: v[6],
            soil_heat_flux: v[7],
            precipitation: v[8],
        };
        w.validate().map_err(|e| DatasetError::Invalid {
            line,
            column: "weather".into(),
            detail: e.to_string(),
        })?;
        days.push(w);
    }
    if days.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(days)
}

pub fn write_et_csv<W: Write>(series: &EtSeries, out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ET_HEADER)?;
    for d in 0..series.len() {
        w.write_record([
            d.to_string(),
            series.et0[d].to_string(),
            series.etx[d].to_string(),
            series.ks[d].to_string(),
            series.eta[d].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
