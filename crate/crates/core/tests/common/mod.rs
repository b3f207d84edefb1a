#![allow(dead_code)]

use pirnn::fao56::WeatherDaily;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Grass reference ET written from the latent-heat form of the combination
/// equation: radiation divided by λ = 2.45 MJ/kg instead of the rounded
/// 0.408 factor, γ from cp·P/(ε·λ), and Tetens saturation pressure.
pub fn pm_oracle(w: &WeatherDaily, elevation_m: f64) -> f64 {
    let lambda = 2.45;
    let cp = 1.013e-3;
    let epsilon = 0.622;
    let tetens = |t: f64| 0.6108 * f64::exp(17.27 * t / (t + 237.3));
    let p = 101.3 * ((293.0 - 0.0065 * elevation_m) / 293.0).powf(5.26);
    let gamma = cp * p / (epsilon * lambda);
    let es = (tetens(w.t_max) + tetens(w.t_min)) / 2.0;
    let ea = es * w.rh_mean / 100.0;
    let t = w.t_mean;
    let slope = 4098.0 * tetens(t) / ((t + 237.3) * (t + 237.3));
    let num = slope * (w.net_radiation - w.soil_heat_flux) / lambda
        + gamma * 900.0 / (t + 273.0) * w.wind_2m * (es - ea);
    let den = slope + gamma * (1.0 + 0.34 * w.wind_2m);
    (num / den).max(0.0)
}

/// A plausible, valid mid-latitude growing-season day.
pub fn random_weather(rng: &mut ChaCha8Rng) -> WeatherDaily {
    let t_min = rng.gen_range(-5.0..22.0);
    let t_max = t_min + rng.gen_range(2.0..16.0);
    WeatherDaily {
        t_mean: rng.gen_range(t_min..=t_max),
        t_min,
        t_max,
        rh_mean: rng.gen_range(15.0..100.0),
        wind_2m: rng.gen_range(0.0..8.0),
        net_radiation: rng.gen_range(-2.0..25.0),
        soil_heat_flux: rng.gen_range(-1.0..1.0),
        precipitation: rng.gen_range(0.0..20.0),
    }
}
