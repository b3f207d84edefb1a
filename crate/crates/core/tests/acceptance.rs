//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.
//!
//! The cross-validation runs use the default configuration and are shared
//! between tests; they are computed one at a time so reported wall-clock
//! times are not inflated by concurrent tests.

mod common;

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use pirnn::dataset::{synth_generate, FieldDataset, PixelSample, SynthConfig};
use pirnn::fao56::reference_et0;
use pirnn::harness::{batch_objective, cross_validate, EvalReport, ModelKind, TrainConfig};
use pirnn::loss::{physics_loss, LossWeights};
use pirnn::model::{FeatureScaler, Modality, Mode, Network, NetworkConfig, NetworkKind};
use pirnn::tensor::{grad_check, GradCheckConfig, Tape, Tensor};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

const PM_CASES: usize = 100;
const PM_TOL_MM: f64 = 0.01;
const PM_MAX_S: f64 = 1.0;

const GRAD_MAX_REL: f64 = 1e-4;
const GRAD_MAX_S: f64 = 30.0;

const ZERO_IFF_CASES: u32 = 1000;

const R2_NOISELESS_MIN: f64 = 0.90;
const R2_NOISY_MIN: f64 = 0.70;
const CV_MAX_S: f64 = 600.0;

const PI_RNN_GAP_MAX: f64 = 0.05;

const MODALITY_GAP_MIN: f64 = 0.10;

const IN_BOUNDS_MIN: f64 = 0.99;
const LAMBDA2_SWEEP: [f64; 3] = [0.01, 0.1, 1.0];

const ANYTIME_TOL: f64 = 0.05;

/// Writes to the process stdout directly so lines show without `--nocapture`.
fn say(line: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn verdict(n: u32, what: &str, ok: bool, detail: String) -> bool {
    say(format!("{} criterion {n} ({what}): {detail}", if ok { "PASS" } else { "FAIL" }));
    ok
}

fn noisy() -> &'static FieldDataset {
    static DS: OnceLock<FieldDataset> = OnceLock::new();
    DS.get_or_init(|| synth_generate(&SynthConfig::default()).unwrap().dataset)
}

fn noiseless() -> &'static FieldDataset {
    static DS: OnceLock<FieldDataset> = OnceLock::new();
    DS.get_or_init(|| synth_generate(&SynthConfig::noiseless()).unwrap().dataset)
}

type Cache = Mutex<HashMap<String, Arc<EvalReport>>>;

/// Cross-validation at the default config with `SEED` and the given
/// overrides, memoised by dataset and overrides.
fn cv(clean: bool, overrides: &[(&str, &str)]) -> Arc<EvalReport> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let key = format!("{clean}{overrides:?}");
    // Holding the lock while computing serialises the runs.
    let mut cache = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(r) = cache.get(&key) {
        return r.clone();
    }
    let mut cfg = TrainConfig {
        seed: SEED,
        ..TrainConfig::default()
    };
    for (k, v) in overrides {
        cfg.set(k, v).unwrap();
    }
    let ds = if clean { noiseless() } else { noisy() };
    let report = Arc::new(cross_validate(&cfg, ds).unwrap());
    say(format!(
        "  cv clean={clean} {overrides:?}: R2 {:.3} ± {:.3} (pooled {:.3}), {:.1} s",
        report.aggregate.r2.mean, report.aggregate.r2.sd, report.aggregate.pooled_r2, report.wall_clock_s
    ));
    cache.insert(key, report.clone());
    report
}

#[test]
fn criterion_1_penman_monteith_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..PM_CASES {
        let w = common::random_weather(&mut rng);
        let elevation = (i * 23 % 1500) as f64;
        let got = reference_et0(&w, elevation).unwrap();
        worst = worst.max((got - common::pm_oracle(&w, elevation)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= PM_TOL_MM && secs < PM_MAX_S;
    assert!(verdict(
        1,
        "ET0 vs independent oracle",
        ok,
        format!("max |diff| {worst:.2e} mm/day (≤ {PM_TOL_MM}), {secs:.3} s (< {PM_MAX_S})")
    ));
}

#[test]
fn criterion_2_full_model_gradients() {
    let cfg = SynthConfig {
        n_fields: 2,
        pixels_per_field: 1,
        season_length_days: 40,
        observation_interval_days: 10,
        ..SynthConfig::default()
    };
    let px: Vec<PixelSample> = synth_generate(&cfg).unwrap().dataset.samples().to_vec();
    assert_eq!((px.len(), px[0].len()), (2, 4));
    let start = Instant::now();
    let config = NetworkConfig {
        hidden: 8,
        dropout: 0.0,
        ..NetworkConfig::default()
    };
    let net = Network::new(
        NetworkKind::PhysicsInformed,
        config,
        Modality::SpectralWeather,
        FeatureScaler::fit(&px).unwrap(),
        SEED,
    )
    .unwrap();
    let refs: Vec<&PixelSample> = px.iter().collect();
    let batch = net.make_batch(&refs).unwrap();
    let f = |tape: &mut Tape, vars: &[pirnn::tensor::Var]| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        batch_objective(&net, tape, vars, &batch, LossWeights::default(), &mut Mode::Train(&mut rng)).map(|o| o.total)
    };
    let report = grad_check(&f, &net.params, GradCheckConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = report.max_rel_error <= GRAD_MAX_REL && report.checked == net.n_parameters() && secs < GRAD_MAX_S;
    assert!(verdict(
        2,
        "PI-RNN total loss grad check",
        ok,
        format!(
            "max rel error {:.2e} (≤ {GRAD_MAX_REL}) over {} parameters, {secs:.2} s (< {GRAD_MAX_S})",
            report.max_rel_error, report.checked
        )
    ));
}

fn phys(eta: &[f64], etx: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let v = tape.leaf(&Tensor::from_vec(eta.to_vec()));
    let l = physics_loss(&mut tape, v, etx).unwrap();
    tape.item(l)
}

#[test]
fn criterion_3_physics_loss_exactness() {
    let examples = [(-1.0, 5.0, 1.0), (6.0, 5.0, 1.0), (3.0, 5.0, 4.0)];
    let examples_ok = examples.iter().all(|&(eta, etx, want)| phys(&[eta], &[etx]) == want);

    let mut runner = TestRunner::new(PtConfig {
        cases: ZERO_IFF_CASES,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strategy = prop::collection::vec((0.0..10.0f64, -5.0..15.0f64, any::<bool>()), 1..40);
    let prop = runner.run(&strategy, |rows| {
        let etx: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let eta: Vec<f64> = rows.iter().map(|r| if r.2 { r.0 } else { r.1 }).collect();
        let equal = eta.iter().zip(&etx).all(|(a, b)| a == b);
        prop_assert_eq!(phys(&eta, &etx) == 0.0, equal);
        Ok(())
    });
    let ok = examples_ok && prop.is_ok();
    assert!(verdict(
        3,
        "physics loss branches and zero set",
        ok,
        format!(
            "branch examples {}, zero iff eta = etx over {ZERO_IFF_CASES} cases: {}",
            if examples_ok { "exact" } else { "wrong" },
            prop.map(|_| "holds".to_string()).unwrap_or_else(|e| e.to_string())
        )
    ));
}

#[test]
fn criterion_4_synthetic_recovery() {
    let clean = cv(true, &[]);
    let noisy = cv(false, &[]);
    let (rc, rn) = (clean.aggregate.r2.mean, noisy.aggregate.r2.mean);
    let slowest = clean.wall_clock_s.max(noisy.wall_clock_s);
    let ok = rc >= R2_NOISELESS_MIN && rn >= R2_NOISY_MIN && slowest <= CV_MAX_S;
    assert!(verdict(
        4,
        "synthetic recovery",
        ok,
        format!(
            "noiseless R2 {rc:.3} (≥ {R2_NOISELESS_MIN}), noisy R2 {rn:.3} (≥ {R2_NOISY_MIN}), slowest run {slowest:.0} s (≤ {CV_MAX_S})"
        )
    ));
}

#[test]
fn criterion_5_baseline_ordering() {
    let pi = cv(false, &[]).aggregate.r2.mean;
    let rnn = cv(false, &[("model", ModelKind::RnnBaseline.name())]).aggregate.r2.mean;
    let sim = cv(false, &[("model", ModelKind::Simulation.name())]).aggregate.r2.mean;
    let ok = sim < pi && sim < rnn && (pi - rnn).abs() <= PI_RNN_GAP_MAX;
    assert!(verdict(
        5,
        "baseline ordering",
        ok,
        format!("simulation {sim:.3} < PI-RNN {pi:.3}, rnn-baseline {rnn:.3}; |PI-RNN - rnn| {:.3} (≤ {PI_RNN_GAP_MAX})", (pi - rnn).abs())
    ));
}

#[test]
fn criterion_6_modality_ablation() {
    let sw = cv(false, &[]).aggregate.r2.mean;
    let s = cv(false, &[("modality", Modality::Spectral.name())]).aggregate.r2.mean;
    let w = cv(false, &[("modality", Modality::Weather.name())]).aggregate.r2.mean;
    let ok = sw >= s && s >= w && sw - w >= MODALITY_GAP_MIN;
    assert!(verdict(
        6,
        "modality ablation",
        ok,
        format!("spectral+weather {sw:.3} ≥ spectral {s:.3} ≥ weather {w:.3}; gap {:.3} (≥ {MODALITY_GAP_MIN})", sw - w)
    ));
}

#[test]
fn criterion_7_physical_consistency() {
    let in_bounds = |r: &EvalReport| r.physics.as_ref().unwrap().eta_in_bounds;
    let default = in_bounds(&cv(false, &[]));
    let off = in_bounds(&cv(false, &[("lambda2", "0")]));
    for l in LAMBDA2_SWEEP {
        let r = cv(false, &[("lambda2", &l.to_string())]);
        say(format!(
            "  lambda2 {l}: in-bounds {:.4}, R2 {:.3}, mean |eta - etx| {:.3}",
            in_bounds(&r),
            r.aggregate.r2.mean,
            r.physics.as_ref().unwrap().mean_abs_gap
        ));
    }
    let ok = default >= IN_BOUNDS_MIN && off < default;
    assert!(verdict(
        7,
        "eta within [0, etx] on held-out pixels",
        ok,
        format!("default lambda2 {default:.4} (≥ {IN_BOUNDS_MIN}), lambda2 = 0 {off:.4} (strictly lower)")
    ));
}

#[test]
fn criterion_8_anytime_curve() {
    let report = cv(false, &[]);
    // Earliest horizon first.
    let mut curve: Vec<(usize, f64)> = report.horizons.iter().map(|h| (h.steps_before_last, h.r2_mean)).collect();
    curve.sort_by(|a, b| b.0.cmp(&a.0));
    let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1 - ANYTIME_TOL);
    let last = curve.last().unwrap();
    let maximal = last.0 == 0 && curve.iter().all(|p| p.1 <= last.1);
    let shown: Vec<String> = curve.iter().map(|p| format!("{}:{:.2}", p.0, p.1)).collect();
    assert!(verdict(
        8,
        "anytime curve",
        monotone && maximal,
        format!(
            "non-decreasing within {ANYTIME_TOL}: {monotone}, maximal at final step: {maximal} [steps before last:R2 {}]",
            shown.join(" ")
        )
    ));
}

#[test]
fn criterion_9_determinism() {
    let cfg = TrainConfig {
        seed: SEED,
        epochs: 2,
        hidden: 8,
        head_units: 16,
        ..TrainConfig::default()
    };
    let a = cross_validate(&cfg, noisy()).unwrap().to_json().unwrap();
    let b = cross_validate(&cfg, noisy()).unwrap().to_json().unwrap();
    assert!(verdict(
        9,
        "byte-identical metrics JSON",
        a == b,
        format!("{} bytes, identical: {}", a.len(), a == b)
    ));
}
