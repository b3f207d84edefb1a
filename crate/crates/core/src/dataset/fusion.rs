use super::{DatasetError, N_WEATHER};
use crate::fao56::WeatherDaily;

fn check_dates(obs_days: &[u32], span: usize) -> Result<(), DatasetError> {
    if obs_days.is_empty() {
        return Err(DatasetError::BadDates("no observations".into()));
    }
    if obs_days[0] == 0 {
        return Err(DatasetError::BadDates("first observation must be after sowing".into()));
    }
    if !obs_days.windows(2).all(|w| w[0] < w[1]) {
        return Err(DatasetError::BadDates(format!(
            "observation days not strictly increasing: {obs_days:?}"
        )));
    }
    let last = *obs_days.last().unwrap() as usize;
    if last > span {
        return Err(DatasetError::BadDates(format!(
            "observation on day {last} outside the {span}-day weather series"
        )));
    }
    Ok(())
}

/// Sums a daily series over the windows `(t_{i−1}, t_i]`, with `t_0 = 0`
/// (sowing). `daily[d]` belongs to day `d + 1`.
pub fn aggregate_windows(obs_days: &[u32], daily: &[f64]) -> Result<Vec<f64>, DatasetError> {
    check_dates(obs_days, daily.len())?;
    let mut prev = 0usize;
    Ok(obs_days
        .iter()
        .map(|&t| {
            let t = t as usize;
            let s = daily[prev..t].iter().sum();
            prev = t;
            s
        })
        .collect())
}

/// Per-window precipitation sum and mean temperature.
pub fn early_fuse(
    obs_days: &[u32],
    daily: &[WeatherDaily],
) -> Result<Vec<[f64; N_WEATHER]>, DatasetError> {
    check_dates(obs_days, daily.len())?;
    let mut prev = 0usize;
    Ok(obs_days
        .iter()
        .map(|&t| {
            let window = &daily[prev..t as usize];
            prev = t as usize;
            let rain: f64 = window.iter().map(|w| w.precipitation).sum();
            let temp = window.iter().map(|w| w.t_mean).sum::<f64>() / window.len() as f64;
            [rain, temp]
        })
        .collect())
}
