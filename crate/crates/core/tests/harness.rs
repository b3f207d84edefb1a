use pirnn::dataset::{synth_generate, FieldDataset, SynthConfig};
use pirnn::harness::{
    cross_validate, emit_trajectories, report_tables, train, HarnessError, MeanSd, ModelKind, OptimizerKind, TrainConfig,
};
use pirnn::model::{Checkpoint, Modality};

fn dataset(seed: u64) -> FieldDataset {
    let cfg = SynthConfig {
        n_fields: 6,
        pixels_per_field: 8,
        season_length_days: 60,
        seed,
        ..SynthConfig::default()
    };
    synth_generate(&cfg).unwrap().dataset
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 8,
        hidden: 8,
        head_units: 16,
        folds: 3,
        seed,
        ..TrainConfig::default()
    }
}

fn all(ds: &FieldDataset) -> Vec<usize> {
    (0..ds.len()).collect()
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let ds = dataset(1);
    let cfg = quick(17);
    let a = train(&cfg, &ds, &all(&ds), &[], 17).unwrap();
    let b = train(&cfg, &ds, &all(&ds), &[], 17).unwrap();
    let ja = Checkpoint::from_network(&a.network, ds.provenance()).to_json().unwrap();
    let jb = Checkpoint::from_network(&b.network, ds.provenance()).to_json().unwrap();
    assert_eq!(ja, jb);
    let c = train(&cfg, &ds, &all(&ds), &[], 18).unwrap();
    assert_ne!(Checkpoint::from_network(&c.network, ds.provenance()).to_json().unwrap(), ja);
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let ds = dataset(2);
    for optimizer in [OptimizerKind::Adam, OptimizerKind::Sgd] {
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            optimizer,
            ..quick(3)
        };
        let out = train(&cfg, &ds, &all(&ds), &[], 3).unwrap();
        let fresh = pirnn::model::Network::new(
            out.network.kind,
            out.network.config,
            out.network.modality,
            out.network.scaler.clone(),
            pirnn::harness::substream_seed(3, 1),
        )
        .unwrap();
        assert_eq!(out.network.params, fresh.params);
    }
}

#[test]
fn log_has_one_row_per_epoch_with_validation() {
    let ds = dataset(3);
    let cfg = quick(4);
    let out = train(&cfg, &ds, &(0..30).collect::<Vec<_>>(), &(30..ds.len()).collect::<Vec<_>>(), 4).unwrap();
    assert_eq!(out.log.len(), cfg.epochs);
    for (i, e) in out.log.iter().enumerate() {
        assert_eq!(e.epoch, i + 1);
        let v = e.validation.as_ref().unwrap();
        assert!(v.data.is_finite() && v.physics >= 0.0);
    }
    let mut csv = Vec::new();
    pirnn::harness::write_log_csv(&out.log, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,L_l,L_phys,L_total"));
    assert_eq!(text.lines().count(), cfg.epochs + 1);
}

#[test]
fn unweighted_physics_is_still_logged() {
    let ds = dataset(4);
    let cfg = TrainConfig {
        lambda2: 0.0,
        ..quick(5)
    };
    let out = train(&cfg, &ds, &all(&ds), &[], 5).unwrap();
    for e in &out.log {
        assert!(e.train.physics > 0.0);
        assert!((e.train.total - e.train.data).abs() <= 1e-12 * e.train.data.max(1e-12));
    }
}

#[test]
fn strong_physics_weight_closes_the_gap() {
    let ds = dataset(5);
    let gap = |lambda2: f64| {
        let cfg = TrainConfig {
            lambda2,
            epochs: 15,
            ..quick(6)
        };
        let out = train(&cfg, &ds, &all(&ds), &[], 6).unwrap();
        let px: Vec<_> = ds.samples().iter().collect();
        let pred = out.network.predict(&px).unwrap();
        let (mut g, mut n) = (0.0, 0.0);
        for (o, s) in pred.iter().zip(&px) {
            for (e, x) in o.eta_t.iter().zip(&s.etx_sim) {
                g += (e - x).abs();
                n += 1.0;
            }
        }
        g / n
    };
    let (strong, none) = (gap(10.0), gap(0.0));
    assert!(strong < none, "λ2=10 gap {strong} vs λ2=0 gap {none}");
}

#[test]
fn divergence_keeps_last_finite_network() {
    let ds = dataset(6);
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e150,
        epochs: 4,
        ..quick(7)
    };
    let out = train(&cfg, &ds, &all(&ds), &[], 7).unwrap();
    assert!(out.diverged_at.is_some());
    assert_eq!(out.log.len() + 1, out.diverged_at.unwrap());
    assert!(out.network.params.iter().all(|p| p.data().iter().all(|v| v.is_finite())));
}

#[test]
fn aggregate_recomputes_from_folds() {
    let ds = dataset(7);
    let report = cross_validate(&quick(8), &ds).unwrap();
    assert_eq!(report.folds.len(), 3);
    let r2: Vec<f64> = report.folds.iter().map(|f| f.metrics.r2).collect();
    let mae: Vec<f64> = report.folds.iter().map(|f| f.metrics.mae).collect();
    assert_eq!(report.aggregate.r2, MeanSd::of(&r2));
    assert_eq!(report.aggregate.mae, MeanSd::of(&mae));
    assert_eq!(report.horizons.len(), ds.samples()[0].len());
    assert_eq!(report.horizons[0].days_before_last, 0.0);
    assert!(report.horizons.windows(2).all(|w| w[0].days_before_last < w[1].days_before_last));
    let json = report.to_json().unwrap();
    let back: pirnn::harness::EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
}

#[test]
fn leave_one_field_out_when_k_equals_fields() {
    let ds = dataset(8);
    let cfg = TrainConfig {
        model: ModelKind::Simulation,
        folds: ds.fields().len(),
        ..quick(9)
    };
    let report = cross_validate(&cfg, &ds).unwrap();
    assert_eq!(report.folds.len(), ds.fields().len());
    assert!(report.folds.iter().all(|f| f.validation_fields.len() == 1));
}

#[test]
fn trajectories_cover_every_pixel_step() {
    let ds = dataset(9);
    let cfg = quick(10);
    let out = train(&cfg, &ds, &all(&ds), &[], 10).unwrap();
    let ckpt = Checkpoint::from_network(&out.network, ds.provenance());
    let mut buf = Vec::new();
    let rows = emit_trajectories(&ckpt, &ds, &mut buf).unwrap();
    let t = ds.samples()[0].len();
    assert_eq!(rows, ds.len() * t);
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), rows + 1);
    assert_eq!(text.lines().next().unwrap(), "field_id,pixel_id,t_index,day,ky,eta_mm,etx_mm,yl");

    let px: Vec<_> = ds.samples().iter().collect();
    let pred = out.network.predict(&px).unwrap();
    let finals: Vec<f64> = text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some(&(t - 1).to_string()))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let expected: Vec<f64> = pred.iter().map(|o| o.yl_final).collect();
    assert_eq!(finals, expected);

    let other = dataset(10);
    assert!(matches!(
        emit_trajectories(&ckpt, &other, Vec::new()),
        Err(HarnessError::ProvenanceMismatch { .. })
    ));
}

#[test]
fn report_orders_models_and_modalities() {
    let ds = dataset(11);
    let run = |model: ModelKind, modality: Modality| {
        cross_validate(
            &TrainConfig {
                model,
                modality,
                epochs: 2,
                ..quick(12)
            },
            &ds,
        )
        .unwrap()
    };
    let single = report_tables(&[run(ModelKind::Simulation, Modality::SpectralWeather)]).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert_eq!(single.rows[0].delta_r2, None);

    let reports = vec![
        run(ModelKind::PiRnn, Modality::SpectralWeather),
        run(ModelKind::Simulation, Modality::SpectralWeather),
        run(ModelKind::PiRnn, Modality::Weather),
        run(ModelKind::RnnBaseline, Modality::Spectral),
        run(ModelKind::PiRnn, Modality::Spectral),
    ];
    let table = report_tables(&reports).unwrap();
    let order: Vec<(ModelKind, Modality)> = table.rows.iter().map(|r| (r.model, r.modality)).collect();
    assert_eq!(
        order,
        vec![
            (ModelKind::RnnBaseline, Modality::Spectral),
            (ModelKind::PiRnn, Modality::Weather),
            (ModelKind::PiRnn, Modality::Spectral),
            (ModelKind::PiRnn, Modality::SpectralWeather),
            (ModelKind::Simulation, Modality::SpectralWeather),
        ]
    );
    let weather = table.rows[1].r2;
    assert_eq!(table.rows[1].delta_r2, Some(0.0));
    assert_eq!(table.rows[3].delta_r2, Some(table.rows[3].r2 - weather));
    assert_eq!(table.rows[0].delta_r2, None);

    let text = table.to_text();
    assert_eq!(text.lines().count(), 6);
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("model,modality,mae,rmse,r2,delta_r2_vs_weather\n"));

    let mut foreign = run(ModelKind::Simulation, Modality::Weather);
    foreign.provenance = "sha256:other".into();
    assert!(matches!(
        report_tables(&[reports[0].clone(), foreign]),
        Err(HarnessError::ProvenanceMismatch { .. })
    ));
}

#[test]
fn config_file_with_comments_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# quick run\nepochs = 7\nmodality = weather  # early fusion only\nlambda2=0.5\n").unwrap();
    let mut cfg = TrainConfig::from_file(&path).unwrap();
    assert_eq!((cfg.epochs, cfg.modality, cfg.lambda2), (7, Modality::Weather, 0.5));
    cfg.set("epochs", "9").unwrap();
    assert_eq!(cfg.epochs, 9);
    let mut again = TrainConfig::default();
    again.apply_text(&cfg.to_text()).unwrap();
    assert_eq!(again, cfg);

    std::fs::write(&path, "epochs = 0\n").unwrap();
    assert!(TrainConfig::from_file(&path).unwrap().validate().is_err());
    std::fs::write(&path, "colour = blue\n").unwrap();
    let err = TrainConfig::from_file(&path).unwrap_err().to_string();
    assert!(err.contains("line 1"), "{err}");
}
