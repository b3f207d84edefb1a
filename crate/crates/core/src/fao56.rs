//! FAO-56 single crop coefficient simulation.
//!
//! Reference evapotranspiration from the daily Penman-Monteith equation,
//! crop-specific maximum evapotranspiration `ETx = Kc · ET0`, and a soil
//! bucket that produces the stress coefficient `Ks` and `ETa = Ks · ETx`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default station elevation in metres.
pub const DEFAULT_ELEVATION_M: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Fao56Error {
    #[error("invalid weather: {0}")]
    InvalidWeather(String),
    #[error("non-finite intermediate in {0}")]
    NonFinite(&'static str),
    #[error("day {day} is beyond the season length {season}")]
    DayOutOfSeason { day: f64, season: f64 },
    #[error("invalid crop coefficient curve: {0}")]
    InvalidCurve(String),
    #[error("invalid soil bucket: {0}")]
    InvalidBucket(String),
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("seasonal ETx sum is zero")]
    ZeroEtx,
    #[error("yield response factor must be positive, got {0}")]
    InvalidKy(f64),
}

/// One day of meteorological drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDaily {
    /// °C
    pub t_mean: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Mean relative humidity, percent.
    pub rh_mean: f64,
    /// Wind speed at 2 m, m/s.
    pub wind_2m: f64,
    /// MJ m⁻² day⁻¹
    pub net_radiation: f64,
    /// MJ m⁻² day⁻¹
    pub soil_heat_flux: f64,
    /// mm/day
    pub precipitation: f64,
}

impl WeatherDaily {
    pub fn validate(&self) -> Result<(), Fao56Error> {
        let fields = [
            ("t_mean", self.t_mean),
            ("t_min", self.t_min),
            ("t_max", self.t_max),
            ("rh_mean", self.rh_mean),
            ("wind_2m", self.wind_2m),
            ("net_radiation", self.net_radiation),
            ("soil_heat_flux", self.soil_heat_flux),
            ("precipitation", self.precipitation),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Fao56Error::InvalidWeather(format!("{name} is not finite ({v})")));
        }
        if !(self.t_min <= self.t_mean && self.t_mean <= self.t_max) {
            return Err(Fao56Error::InvalidWeather(format!(
                "expected t_min <= t_mean <= t_max, got {} / {} / {}",
                self.t_min, self.t_mean, self.t_max
            )));
        }
        if !(0.0..=100.0).contains(&self.rh_mean) {
            return Err(Fao56Error::InvalidWeather(format!(
                "rh_mean {} outside [0, 100]",
                self.rh_mean
            )));
        }
        if self.wind_2m < 0.0 {
            return Err(Fao56Error::InvalidWeather(format!("wind_2m {} < 0", self.wind_2m)));
        }
        if self.precipitation < 0.0 {
            return Err(Fao56Error::InvalidWeather(format!(
                "precipitation {} < 0",
                self.precipitation
            )));
        }
        Ok(())
    }
}

/// Saturation vapour pressure e°(T) in kPa.
pub fn saturation_vapour_pressure(t: f64) -> f64 {
    0.6108 * (17.27 * t / (t + 237.3)).exp()
}

/// Slope of the saturation vapour pressure curve at `t`, kPa/°C.
pub fn vapour_pressure_slope(t: f64) -> f64 {
    4098.0 * saturation_vapour_pressure(t) / (t + 237.3).powi(2)
}

/// Atmospheric pressure in kPa at `elevation_m`.
pub fn atmospheric_pressure(elevation_m: f64) -> f64 {
    101.3 * ((293.0 - 0.0065 * elevation_m) / 293.0).powf(5.26)
}

/// Psychrometric constant γ in kPa/°C.
pub fn psychrometric_constant(elevation_m: f64) -> f64 {
    0.665e-3 * atmospheric_pressure(elevation_m)
}

/// Daily grass reference evapotranspiration ET0 in mm/day. Negative raw
/// values are clamped to zero.
pub fn reference_et0(day: &WeatherDaily, elevation_m: f64) -> Result<f64, Fao56Error> {
    day.validate()?;
    let t = day.t_mean;
    let u2 = day.wind_2m;
    let es = 0.5 * (saturation_vapour_pressure(day.t_max) + saturation_vapour_pressure(day.t_min));
    let ea = day.rh_mean / 100.0 * es;
    let delta = vapour_pressure_slope(t);
    let gamma = psychrometric_constant(elevation_m);

    let radiative = 0.408 * delta * (day.net_radiation - day.soil_heat_flux);
    let aerodynamic = gamma * (900.0 / (t + 273.0)) * u2 * (es - ea);
    let denom = delta + gamma * (1.0 + 0.34 * u2);
    let et0 = (radiative + aerodynamic) / denom;
    if !et0.is_finite() || !denom.is_finite() || denom <= 0.0 {
        return Err(Fao56Error::NonFinite("reference_et0"));
    }
    Ok(et0.max(0.0))
}

/// Staged single crop coefficient. Stage boundaries are days after sowing
/// at the end of the initial, development, mid-season and late stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropCoefficientCurve {
    pub initial_end: f64,
    pub development_end: f64,
    pub mid_end: f64,
    pub late_end: f64,
    pub kc_initial: f64,
    pub kc_mid: f64,
    pub kc_end: f64,
}

impl CropCoefficientCurve {
    pub fn new(
        boundaries: [f64; 4],
        kc_initial: f64,
        kc_mid: f64,
        kc_end: f64,
    ) -> Result<Self, Fao56Error> {
        let c = Self {
            initial_end: boundaries[0],
            development_end: boundaries[1],
            mid_end: boundaries[2],
            late_end: boundaries[3],
            kc_initial,
            kc_mid,
            kc_end,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), Fao56Error> {
        let b = [self.initial_end, self.development_end, self.mid_end, self.late_end];
        if !(b[0] > 0.0 && b.windows(2).all(|w| w[0] < w[1]) && b.iter().all(|x| x.is_finite())) {
            return Err(Fao56Error::InvalidCurve(format!(
                "stage boundaries must be positive and strictly increasing, got {b:?}"
            )));
        }
        for kc in [self.kc_initial, self.kc_mid, self.kc_end] {
            if !(kc > 0.0 && kc.is_finite()) {
                return Err(Fao56Error::InvalidCurve(format!("kc must be positive, got {kc}")));
            }
        }
        Ok(())
    }

    /// Spring cereal on a season of `season_days`, stage lengths in the
    /// proportion 20:25:45:30 of a 120-day season.
    pub fn spring_cereal(season_days: f64) -> Self {
        let s = season_days / 120.0;
        Self {
            initial_end: 20.0 * s,
            development_end: 45.0 * s,
            mid_end: 90.0 * s,
            late_end: season_days,
            kc_initial: 0.3,
            kc_mid: 1.15,
            kc_end: 0.4,
        }
    }

    /// Curve with the same coefficient everywhere.
    pub fn constant(kc: f64, season_days: f64) -> Self {
        Self {
            initial_end: season_days / 4.0,
            development_end: season_days / 2.0,
            mid_end: 3.0 * season_days / 4.0,
            late_end: season_days,
            kc_initial: kc,
            kc_mid: kc,
            kc_end: kc,
        }
    }

    pub fn season_length(&self) -> f64 {
        self.late_end
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kc_initial: self.kc_initial * factor,
            kc_mid: self.kc_mid * factor,
            kc_end: self.kc_end * factor,
            ..*self
        }
    }
}

/// Crop coefficient on `day` days after sowing.
pub fn crop_kc(day: f64, curve: &CropCoefficientCurve) -> Result<f64, Fao56Error> {
    if !(day >= 0.0) || day > curve.late_end {
        return Err(Fao56Error::DayOutOfSeason {
            day,
            season: curve.late_end,
        });
    }
    let lerp = |a: f64, b: f64, start: f64, end: f64| a + (b - a) * (day - start) / (end - start);
    Ok(if day <= curve.initial_end {
        curve.kc_initial
    } else if day <= curve.development_end {
        lerp(curve.kc_initial, curve.kc_mid, curve.initial_end, curve.development_end)
    } else if day <= curve.mid_end {
        curve.kc_mid
    } else {
        lerp(curve.kc_mid, curve.kc_end, curve.mid_end, curve.late_end)
    })
}

/// Daily ETx for a season. `weather[i]` is day `i + 1` after sowing.
pub fn simulate_etx(
    weather: &[WeatherDaily],
    curve: &CropCoefficientCurve,
    elevation_m: f64,
) -> Result<Vec<f64>, Fao56Error> {
    curve.validate()?;
    weather
        .iter()
        .enumerate()
        .map(|(i, w)| Ok(crop_kc((i + 1) as f64, curve)? * reference_et0(w, elevation_m)?))
        .collect()
}

/// Root-zone water bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilBucket {
    /// Total available water, mm.
    pub total_available_water: f64,
    /// Fraction of TAW that can be depleted before stress sets in.
    pub depletion_fraction: f64,
    /// Root-zone depletion, mm.
    pub current_depletion: f64,
}

impl SoilBucket {
    pub fn new(taw: f64, p: f64, depletion: f64) -> Result<Self, Fao56Error> {
        let b = Self {
            total_available_water: taw,
            depletion_fraction: p,
            current_depletion: depletion,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), Fao56Error> {
        if !(self.total_available_water > 0.0 && self.total_available_water.is_finite()) {
            return Err(Fao56Error::InvalidBucket(format!(
                "TAW must be positive, got {}",
                self.total_available_water
            )));
        }
        if !(self.depletion_fraction > 0.0 && self.depletion_fraction < 1.0) {
            return Err(Fao56Error::InvalidBucket(format!(
                "depletion fraction must lie in (0, 1), got {}",
                self.depletion_fraction
            )));
        }
        if !(0.0..=self.total_available_water).contains(&self.current_depletion) {
            return Err(Fao56Error::InvalidBucket(format!(
                "depletion {} outside [0, {}]",
                self.current_depletion, self.total_available_water
            )));
        }
        Ok(())
    }

    /// Stress coefficient for the current depletion.
    pub fn ks(&self) -> f64 {
        let taw = self.total_available_water;
        let raw = self.depletion_fraction * taw;
        if self.current_depletion <= raw {
            1.0
        } else {
            ((taw - self.current_depletion) / ((1.0 - self.depletion_fraction) * taw)).clamp(0.0, 1.0)
        }
    }

    /// Advances one step: returns `(ks, eta)` and updates the depletion.
    pub fn step(&mut self, precipitation: f64, etx: f64) -> (f64, f64) {
        let ks = self.ks();
        let eta = ks * etx;
        self.current_depletion =
            (self.current_depletion - precipitation + eta).clamp(0.0, self.total_available_water);
        (ks, eta)
    }
}

/// Per-day `Ks` and `ETa` from a water balance driven by `precipitation`.
pub fn water_balance(
    precipitation: &[f64],
    etx: &[f64],
    bucket: &mut SoilBucket,
) -> Result<(Vec<f64>, Vec<f64>), Fao56Error> {
    if precipitation.len() != etx.len() {
        return Err(Fao56Error::LengthMismatch {
            left: precipitation.len(),
            right: etx.len(),
        });
    }
    bucket.validate()?;
    Ok(precipitation.iter().zip(etx).map(|(&p, &e)| bucket.step(p, e)).unzip())
}

/// [`water_balance`] with precipitation taken from the weather series.
pub fn soil_water_stress(
    weather: &[WeatherDaily],
    etx: &[f64],
    bucket: &mut SoilBucket,
) -> Result<(Vec<f64>, Vec<f64>), Fao56Error> {
    let precip: Vec<f64> = weather.iter().map(|w| w.precipitation).collect();
    water_balance(&precip, etx, bucket)
}

/// Per-day evapotranspiration series of one simulated season, mm/day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtSeries {
    pub et0: Vec<f64>,
    pub etx: Vec<f64>,
    pub ks: Vec<f64>,
    pub eta: Vec<f64>,
}

impl EtSeries {
    pub fn len(&self) -> usize {
        self.etx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etx.is_empty()
    }
}

/// ET0, ETx, Ks and ETa for a season.
pub fn simulate_season(
    weather: &[WeatherDaily],
    curve: &CropCoefficientCurve,
    bucket: &mut SoilBucket,
    elevation_m: f64,
) -> Result<EtSeries, Fao56Error> {
    let et0 = weather
        .iter()
        .map(|w| reference_et0(w, elevation_m))
        .collect::<Result<Vec<_>, _>>()?;
    let etx = simulate_etx(weather, curve, elevation_m)?;
    let (ks, eta) = soil_water_stress(weather, &etx, bucket)?;
    Ok(EtSeries { et0, etx, ks, eta })
}

/// Seasonal relative yield loss `Ky · (1 − ΣETa / ΣETx)`, clamped to [0, 1].
pub fn true_yield_loss(ky: f64, etx: &[f64], eta: &[f64]) -> Result<f64, Fao56Error> {
    if etx.len() != eta.len() {
        return Err(Fao56Error::LengthMismatch {
            left: etx.len(),
            right: eta.len(),
        });
    }
    if !(ky > 0.0 && ky.is_finite()) {
        return Err(Fao56Error::InvalidKy(ky));
    }
    let sum_x: f64 = etx.iter().sum();
    if sum_x <= 0.0 {
        return Err(Fao56Error::ZeroEtx);
    }
    let sum_a: f64 = eta.iter().sum();
    Ok((ky * (1.0 - sum_a / sum_x)).clamp(0.0, 1.0))
}
