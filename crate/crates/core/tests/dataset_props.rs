use std::collections::BTreeSet;

use pirnn::dataset::{aggregate_windows, early_fuse, kfold_split, read_csv, synth_generate, write_csv, SynthConfig};
use pirnn::fao56::{true_yield_loss, WeatherDaily};
use proptest::prelude::*;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_fields: 7,
        pixels_per_field: 3,
        season_length_days: 60,
        seed,
        ..SynthConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn folds_never_share_fields(seed in any::<u64>(), k in 2usize..=7) {
        let ds = synth_generate(&small(seed % 1000)).unwrap().dataset;
        let folds = kfold_split(&ds, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = BTreeSet::new();
        for f in &folds {
            let train: BTreeSet<&str> = f.train.iter().map(|&i| ds.samples()[i].field_id.as_str()).collect();
            let val: BTreeSet<&str> = f.validation.iter().map(|&i| ds.samples()[i].field_id.as_str()).collect();
            prop_assert!(train.is_disjoint(&val));
            prop_assert_eq!(f.train.len() + f.validation.len(), ds.len());
            for v in val {
                prop_assert!(seen.insert(v.to_string()), "field {} validated twice", v);
            }
        }
        prop_assert_eq!(seen.len(), ds.fields().len());
    }

    #[test]
    fn window_sums_conserve_precipitation(
        rain in prop::collection::vec(0.0..30.0f64, 20..80),
        cuts in prop::collection::btree_set(1u32..80, 1..8),
    ) {
        let n = rain.len() as u32;
        let obs: Vec<u32> = cuts.into_iter().filter(|&d| d <= n).collect();
        prop_assume!(!obs.is_empty());
        let days: Vec<WeatherDaily> = rain
            .iter()
            .map(|&p| WeatherDaily {
                t_mean: 15.0,
                t_min: 10.0,
                t_max: 20.0,
                rh_mean: 60.0,
                wind_2m: 2.0,
                net_radiation: 12.0,
                soil_heat_flux: 0.0,
                precipitation: p,
            })
            .collect();
        let fused = early_fuse(&obs, &days).unwrap();
        let upto = *obs.last().unwrap() as usize;
        let total: f64 = rain[..upto].iter().sum();
        let summed: f64 = fused.iter().map(|w| w[0]).sum();
        prop_assert!((summed - total).abs() <= 1e-9 * total.max(1.0));
        let windows = aggregate_windows(&obs, &rain).unwrap();
        prop_assert!((windows.iter().sum::<f64>() - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn stored_targets_recompute_exactly(seed in 0u64..500) {
        let s = synth_generate(&small(seed)).unwrap();
        for (px, t) in s.dataset.samples().iter().zip(&s.truth) {
            let eta: Vec<f64> = t.ks_daily.iter().zip(&t.etx_daily).map(|(k, x)| k * x).collect();
            prop_assert_eq!(true_yield_loss(t.ky, &t.etx_daily, &eta).unwrap(), px.target_yl);
            prop_assert_eq!(true_yield_loss(t.ky, &t.etx_daily, &t.eta_daily).unwrap(), px.target_yl);
        }
    }
}

#[test]
fn csv_round_trip_keeps_provenance() {
    let ds = synth_generate(&small(3)).unwrap().dataset;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    let back = read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.samples(), ds.samples());
    assert_eq!(back.provenance(), ds.provenance());

    let file = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(file.path(), &buf).unwrap();
    assert_eq!(pirnn::dataset::ingest_csv(file.path()).unwrap().provenance(), ds.provenance());
}

#[test]
fn k_equal_to_field_count_leaves_one_field_out() {
    let ds = synth_generate(&small(8)).unwrap().dataset;
    let k = ds.fields().len();
    let folds = kfold_split(&ds, k, 1).unwrap();
    for f in &folds {
        assert_eq!(f.validation_fields.len(), 1);
        assert_eq!(f.train_fields.len(), k - 1);
    }
    assert!(kfold_split(&ds, k + 1, 1).is_err());
}

#[test]
fn default_dataset_shape() {
    let s = synth_generate(&SynthConfig::default()).unwrap();
    assert_eq!(s.dataset.fields().len(), 20);
    assert_eq!(s.dataset.len(), 1000);
    assert!(s.dataset.samples().iter().all(|p| p.len() == 12));
    let mean = |dry: bool| {
        let v: Vec<f64> = s.truth.iter().filter(|t| t.drought == dry).map(|t| t.target_yl).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert_eq!(s.truth.iter().filter(|t| t.drought).count(), 8 * 50);
    assert!(mean(true) > mean(false));
}
