use std::collections::BTreeSet;

use aqs_core::data::{self, FeatureSpec, SynthProfile, WindowSample};
use aqs_core::linalg::Matrix;
use aqs_core::optim::LossKind;
use aqs_core::seq2seq::Decoding;
use aqs_core::train::{self, TrainConfig};
use chrono::NaiveDate;

/// 32 windows from ten days of the default synthetic profile.
fn overfit_windows() -> (Vec<WindowSample>, FeatureSpec) {
    let records = data::synth_generate(42, 24 * 10, &SynthProfile::default());
    let columns: Vec<String> = ["humidity", "temperature", "upstream_pm", "wind_speed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (spec, _) = data::fit_normalization(&records, &FeatureSpec::with_target_and(&columns)).unwrap();
    let tables = data::build_features(&records, &spec, &BTreeSet::new()).unwrap();
    let windows: Vec<WindowSample> = data::make_windows(&tables, 24, 8)
        .unwrap()
        .into_iter()
        .step_by(4)
        .take(32)
        .collect();
    assert_eq!(windows.len(), 32);
    (windows, spec)
}

#[test]
fn overfit_suite_converges_and_loss_keeps_falling() {
    let (windows, spec) = overfit_windows();
    let cfg = TrainConfig {
        hidden: 16,
        depth: 1,
        epochs: 2000,
        loss: LossKind::Mse,
        learning_rate: 9e-4,
        patience: 0,
        seed: 1,
        ..TrainConfig::default()
    };
    let ck = train::train(&windows, &[], &spec, &cfg).unwrap();
    assert_eq!(ck.history.len(), 2000);

    let mae = train::mean_loss(&ck.model, &windows, LossKind::Mae, Decoding::TeacherForced).unwrap();
    assert!(mae < 0.05, "training MAE {mae}");

    // 10-epoch means, compared across every 100-epoch span after epoch 200.
    let losses: Vec<f64> = ck.history.iter().map(|r| r.train_loss).collect();
    let smoothed = |end: usize| losses[end - 10..end].iter().sum::<f64>() / 10.0;
    for start in 200..=(losses.len() - 100) {
        let (a, b) = (smoothed(start), smoothed(start + 100));
        assert!(b <= a, "smoothed loss rose from {a} (epoch {start}) to {b} (epoch {})", start + 100);
    }
}

#[test]
fn constant_series_predictions_approach_the_constant() {
    let origin = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let level = 0.6;
    let windows: Vec<WindowSample> = (0..8)
        .map(|i| WindowSample {
            encoder_block: Matrix::filled(12, 3, level),
            target: vec![level; 4],
            last_observed: level,
            station_id: "c".into(),
            origin: origin + chrono::Duration::hours(i),
        })
        .collect();
    let cfg = TrainConfig {
        hidden: 8,
        t_enc: 12,
        horizon: 4,
        epochs: 300,
        learning_rate: 0.01,
        batch_size: 8,
        patience: 0,
        seed: 3,
        ..TrainConfig::default()
    };
    let ck = train::train(&windows, &[], &FeatureSpec::new(Vec::new()), &cfg).unwrap();
    let pred = ck.model.forward(&windows[0], Decoding::Autoregressive).unwrap();
    for p in pred {
        assert!((p - level).abs() < 0.02, "prediction {p}");
    }
}
