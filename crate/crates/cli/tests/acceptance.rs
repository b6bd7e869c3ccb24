//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use aqs_core::data::{self, FeatureSpec, HourlyRecord, NormStats, SynthProfile, WindowSample};
use aqs_core::eval;
use aqs_core::linalg::Matrix;
use aqs_core::optim::{self, AdamConfig, AdamState, LossKind};
use aqs_core::rnn::{self, CellVariant, LstmParams, LstmState};
use aqs_core::seq2seq::{Decoding, ModelDims, Seq2SeqModel};
use aqs_core::train::{self, Checkpoint, GradCheckConfig, TrainConfig};
use proptest::prelude::{prop, prop_assert, Just, Strategy};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn columns() -> Vec<String> {
    ["humidity", "temperature", "upstream_pm", "wind_speed"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Gradient check

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for variant in [CellVariant::InputCandidate, CellVariant::RecurrentCandidate] {
        for loss in [LossKind::Mse, LossKind::Mae] {
            for decoding in [Decoding::TeacherForced, Decoding::Autoregressive] {
                for depth in [1, 2] {
                    let cfg = GradCheckConfig {
                        dims: ModelDims {
                            input: 3,
                            hidden: 4,
                            depth,
                            t_enc: 4,
                            horizon: 2,
                        },
                        variant,
                        loss,
                        decoding,
                        eps: 1e-5,
                        ..GradCheckConfig::default()
                    };
                    let report = train::gradient_check(&cfg).map_err(err)?;
                    let tag = format!("{} {} {decoding:?} depth {depth}", variant.as_str(), loss.label());
                    if loss == LossKind::Mae {
                        check(report.min_residual >= 1e-3, || {
                            format!("{tag}: residual {} below the 1e-3 guard", report.min_residual)
                        })?;
                    }
                    check(report.max_rel_err < 1e-5, || {
                        format!("{tag}: max relative error {:.3e}", report.max_rel_err)
                    })?;
                    worst = worst.max(report.max_rel_err);
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} configurations, max relative error {worst:.3e}"))
}

// ---------------------------------------------------------------------------
// 2. Cell oracle

fn scalar(v: f64) -> Matrix {
    Matrix::filled(1, 1, v)
}

fn cell_oracle() -> Outcome {
    let mut p = LstmParams::zeros(1, 1);
    p.w_xg = scalar(1.0);
    let s = rnn::lstm_step(&p, CellVariant::InputCandidate, &scalar(1.0), &LstmState::zeros(1, 1)).map_err(err)?;
    let h = s.h.get(0, 0);
    check((h - 0.18170).abs() < 1e-4, || format!("h = {h}"))?;

    let mut p = LstmParams::zeros(1, 1);
    p.b_f = scalar(20.0);
    p.b_i = scalar(-20.0);
    let state = LstmState {
        h: scalar(0.3),
        c: scalar(0.7),
    };
    let s = rnn::lstm_step(&p, CellVariant::InputCandidate, &scalar(1.0), &state).map_err(err)?;
    let c = s.c.get(0, 0);
    check((c - 0.7).abs() < 1e-8, || format!("carried memory {c}"))?;
    Ok(format!("h = {h:.6}, carried c = {c:.10}"))
}

// ---------------------------------------------------------------------------
// 3. Optimizer oracle

fn adam_oracle() -> Outcome {
    let cfg = AdamConfig::default();
    let g = 2.0;
    let mut p = Matrix::filled(1, 1, 0.5);
    let mut st = AdamState::new(cfg, &[&p]);
    st.step(&mut [&mut p], &[&scalar(g)]).map_err(err)?;
    let expected = 0.5 - cfg.lr * g / (g.abs() + cfg.eps);
    let d1 = (p.get(0, 0) - expected).abs();
    check(d1 < 1e-9, || format!("first step off by {d1:e}"))?;

    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let mut theta = 1.0;
    let m1 = (1.0 - b1) * g;
    let v1 = (1.0 - b2) * g * g;
    theta -= cfg.lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + cfg.eps);
    let m2 = b1 * m1 + (1.0 - b1) * g;
    let v2 = b2 * v1 + (1.0 - b2) * g * g;
    theta -= cfg.lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + cfg.eps);
    let mut p = Matrix::filled(1, 1, 1.0);
    let mut st = AdamState::new(cfg, &[&p]);
    for _ in 0..2 {
        st.step(&mut [&mut p], &[&scalar(g)]).map_err(err)?;
    }
    let d2 = (p.get(0, 0) - theta).abs();
    check(d2 < 1e-12, || format!("two-step recurrence off by {d2:e}"))?;
    Ok(format!("first step error {d1:.1e}, two-step error {d2:.1e}"))
}

// ---------------------------------------------------------------------------
// 4. Overfit

fn overfit() -> Outcome {
    let records = data::synth_generate(42, 24 * 10, &SynthProfile::default());
    let (spec, _) = data::fit_normalization(&records, &FeatureSpec::with_target_and(&columns())).map_err(err)?;
    let tables = data::build_features(&records, &spec, &BTreeSet::new()).map_err(err)?;
    let windows: Vec<WindowSample> = data::make_windows(&tables, 24, 8)
        .map_err(err)?
        .into_iter()
        .step_by(4)
        .take(32)
        .collect();
    check(windows.len() == 32, || format!("{} windows", windows.len()))?;
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
    let ck = train::train(&windows, &[], &spec, &cfg).map_err(err)?;
    let mae = train::mean_loss(&ck.model, &windows, LossKind::Mae, Decoding::TeacherForced).map_err(err)?;
    check(mae < 0.05, || format!("training MAE {mae:.4}"))?;
    Ok(format!("training MAE {mae:.4} after {} epochs", ck.history.len()))
}

// ---------------------------------------------------------------------------
// 5 and 7. Persistence baseline and upstream ablation on two synthetic years

struct Benchmark {
    records: Vec<HourlyRecord>,
    test_start: chrono::NaiveDateTime,
}

impl Benchmark {
    fn new() -> Self {
        let records = data::synth_generate(42, 2 * 8760, &SynthProfile::default());
        // Test period: the last quarter of the second year.
        let test_start = records[8760 + 8760 * 3 / 4].timestamp;
        Benchmark { records, test_start }
    }

    /// Trains on the pre-test windows and returns (model RMSE, persistence RMSE).
    fn run(&self, horizon: usize, drop: &[String]) -> Result<(f64, f64), String> {
        let training: Vec<HourlyRecord> =
            self.records.iter().filter(|r| r.timestamp < self.test_start).cloned().collect();
        let spec = FeatureSpec::with_target_and(&columns()).without(drop);
        let (spec, _) = data::fit_normalization(&training, &spec).map_err(err)?;
        let tables = data::build_features(&self.records, &spec, &BTreeSet::new()).map_err(err)?;
        let windows = data::make_windows(&tables, 24, horizon).map_err(err)?;
        let parts = eval::partition_windows(windows, None, self.test_start);
        let (tr, va) = data::split_train_val(parts.training, 1, 0.2).map_err(err)?;
        let cfg = TrainConfig {
            hidden: 32,
            epochs: 5,
            horizon,
            patience: 0,
            seed: 1,
            ..TrainConfig::default()
        };
        let ck = train::train(&tr, &va, &spec, &cfg).map_err(err)?;
        let model = eval::evaluate(&ck, &parts.test, horizon).map_err(err)?;
        let base = eval::persistence_baseline(&parts.test, horizon, spec.target()).map_err(err)?;
        Ok((model.rmse, base.rmse))
    }
}

fn beats_persistence(full_h8: (f64, f64)) -> Outcome {
    let (model, base) = full_h8;
    let ratio = model / base;
    check(ratio <= 0.8, || format!("RMSE {model:.3} vs persistence {base:.3}, ratio {ratio:.3}"))?;
    Ok(format!("RMSE {model:.3} vs persistence {base:.3}, ratio {ratio:.3}"))
}

fn ablation(bench: &Benchmark, full_h8: (f64, f64)) -> Outcome {
    let drop = vec!["upstream_pm".to_string()];
    let mut lines = Vec::new();
    for horizon in [8, 24] {
        let full = if horizon == 8 { full_h8.0 } else { bench.run(horizon, &[])?.0 };
        let ablated = bench.run(horizon, &drop)?.0;
        check(ablated > full, || format!("{horizon}h: without upstream {ablated:.3} <= with {full:.3}"))?;
        lines.push(format!("{horizon}h {full:.3} -> {ablated:.3}"));
    }
    Ok(format!("RMSE with -> without upstream_pm: {}", lines.join(", ")))
}

// ---------------------------------------------------------------------------
// 6. Transfer advantage

fn transfer_advantage() -> Outcome {
    let (h1, h2) = (2900, 1460);
    let records = data::synth_two_regime(42, &SynthProfile::default(), h1, &SynthProfile::shifted(), h2);
    let (spec, _) = data::fit_normalization(&records, &FeatureSpec::with_target_and(&columns())).map_err(err)?;
    let tables = data::build_features(&records, &spec, &BTreeSet::new()).map_err(err)?;
    let windows = data::make_windows(&tables, 24, 8).map_err(err)?;
    let boundary = records[h1].timestamp;
    let end = records.last().unwrap().timestamp + chrono::Duration::hours(1);
    let parts = eval::partition_windows(windows, Some(boundary), end);
    let (tr1, va1) = data::split_train_val(parts.first, 1, 0.2).map_err(err)?;
    let (tr2, va2) = data::split_train_val(parts.second, 1, 0.2).map_err(err)?;

    let base_cfg = TrainConfig {
        hidden: 32,
        epochs: 8,
        patience: 0,
        seed: 1,
        ..TrainConfig::default()
    };
    let base = train::train(&tr1, &va1, &spec, &base_cfg).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 10,
        ..base_cfg
    };
    let scratch = train::train(&tr2, &va2, &spec, &cfg).map_err(err)?;
    let transfer = train::transfer_train(&base, &tr2, &va2, &cfg).map_err(err)?;
    let best = scratch.best_epoch().ok_or("scratch run has no history")?;
    let reached = transfer.history.iter().find(|r| r.val_loss <= best.val_loss);
    let summary = format!(
        "scratch best {:.4} at epoch {}; transfer reaches it at epoch {}",
        best.val_loss,
        best.epoch,
        reached.map_or("never".to_string(), |r| r.epoch.to_string())
    );
    check(reached.is_some_and(|r| r.epoch < best.epoch), || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 8. Determinism and checkpoint persistence

fn determinism() -> Outcome {
    let records = data::synth_generate(8, 400, &SynthProfile::default());
    let (spec, _) = data::fit_normalization(&records, &FeatureSpec::with_target_and(&columns())).map_err(err)?;
    let tables = data::build_features(&records, &spec, &BTreeSet::new()).map_err(err)?;
    let windows = data::make_windows(&tables, 24, 8).map_err(err)?;
    let (tr, va) = data::split_train_val(windows, 5, 0.2).map_err(err)?;
    let cfg = TrainConfig {
        hidden: 8,
        epochs: 3,
        seed: 5,
        ..TrainConfig::default()
    };
    let a = train::train(&tr, &va, &spec, &cfg).map_err(err)?;
    let b = train::train(&tr, &va, &spec, &cfg).map_err(err)?;
    let bytes = a.to_bytes();
    check(bytes == b.to_bytes(), || "repeated training gave different checkpoints".into())?;
    let other = train::train(&tr, &va, &spec, &TrainConfig { seed: 6, ..cfg }).map_err(err)?;
    check(other.to_bytes() != bytes, || "seed has no effect".into())?;

    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("model.ckpt");
    a.save(&path).map_err(err)?;
    let loaded = Checkpoint::load(&path).map_err(err)?;
    check(loaded.to_bytes() == bytes, || "round trip changed the encoding".into())?;
    for ((name, x), (_, y)) in a.model.params.named_tensors().iter().zip(loaded.model.params.named_tensors()) {
        let same = x.as_slice().iter().zip(y.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits());
        check(same, || format!("{name} not bit-exact after reload"))?;
    }

    let mut corrupt = std::fs::read(&path).map_err(err)?;
    let last = corrupt.len() - 1;
    corrupt[last] ^= 0x01;
    std::fs::write(&path, &corrupt).map_err(err)?;
    match Checkpoint::load(&path) {
        Ok(_) => return Err("corrupted checkpoint accepted".into()),
        Err(e) => check(e.to_string().contains("checksum"), || format!("unexpected error: {e}"))?,
    }
    Ok(format!("{} byte checkpoint reproduced, reloaded bit-exact, corruption rejected", bytes.len()))
}

// ---------------------------------------------------------------------------
// 9. Invariants as seeded property tests

fn runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases: 128,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn values(n: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, n)
}

fn invariants() -> Outcome {
    let mut passed = Vec::new();
    let mut run = |name: &str, result: Result<(), String>| -> Result<(), String> {
        result.map_err(|e| format!("{name}: {e}"))?;
        passed.push(name.to_string());
        Ok(())
    };

    // Gate bounds and |h| < 1.
    let (input, hidden, batch) = (3, 4, 2);
    let n_params = 4 * hidden * (input + hidden + 1);
    run(
        "gate bounds",
        runner()
            .run(
                &(
                    values(n_params, 1.0),
                    values(input * batch, 2.0),
                    values(hidden * batch, 0.99),
                    values(hidden * batch, 3.0),
                    prop::bool::ANY,
                ),
                |(p, x, h, c, recurrent)| {
                    let mut params = LstmParams::zeros(input, hidden);
                    let mut it = p.into_iter();
                    for (_, t) in params.all_tensors_mut() {
                        for v in t.as_mut_slice() {
                            *v = it.next().unwrap();
                        }
                    }
                    let variant = if recurrent {
                        CellVariant::RecurrentCandidate
                    } else {
                        CellVariant::InputCandidate
                    };
                    let state = LstmState {
                        h: Matrix::new(hidden, batch, h).unwrap(),
                        c: Matrix::new(hidden, batch, c).unwrap(),
                    };
                    let x = Matrix::new(input, batch, x).unwrap();
                    let (next, cache) = rnn::lstm_step_cached(&params, variant, &x, &state).unwrap();
                    for gate in [&cache.i, &cache.f, &cache.o] {
                        prop_assert!(gate.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
                    }
                    prop_assert!(cache.g.as_slice().iter().all(|&v| v > -1.0 && v < 1.0));
                    prop_assert!(next.h.as_slice().iter().all(|&v| v > -1.0 && v < 1.0));
                    Ok(())
                },
            )
            .map_err(err),
    )?;

    // Context is the mean of the top-layer states and follows batch permutations.
    run(
        "context mean and permutation",
        runner()
            .run(
                &(0u64..1000, 1usize..3, values(5 * 3 * 3, 2.0), Just(vec![0usize, 1, 2]).prop_shuffle()),
                |(seed, depth, xs, perm)| {
                    let dims = ModelDims {
                        input: 3,
                        hidden: 4,
                        depth,
                        t_enc: 5,
                        horizon: 2,
                    };
                    let model = Seq2SeqModel::init(seed, dims, CellVariant::RecurrentCandidate).unwrap();
                    let seq: Vec<Matrix> =
                        xs.chunks(9).map(|c| Matrix::new(3, 3, c.to_vec()).unwrap()).collect();
                    let out = model.encode(&seq).unwrap();
                    for r in 0..4 {
                        for b in 0..3 {
                            let mean = out.hidden_seq.iter().map(|h| h.get(r, b)).sum::<f64>() / 5.0;
                            prop_assert!((out.context.get(r, b) - mean).abs() < 1e-12);
                        }
                    }
                    let permuted: Vec<Matrix> = seq
                        .iter()
                        .map(|m| {
                            let mut p = Matrix::zeros(3, 3);
                            for r in 0..3 {
                                for (b, &src) in perm.iter().enumerate() {
                                    p.set(r, b, m.get(r, src));
                                }
                            }
                            p
                        })
                        .collect();
                    let out_p = model.encode(&permuted).unwrap();
                    for r in 0..4 {
                        for (b, &src) in perm.iter().enumerate() {
                            prop_assert!((out_p.context.get(r, b) - out.context.get(r, src)).abs() < 1e-12);
                        }
                    }
                    Ok(())
                },
            )
            .map_err(err),
    )?;

    run(
        "MAE <= RMSE",
        runner()
            .run(&(1usize..40).prop_flat_map(|n| (values(n, 50.0), values(n, 50.0))), |(p, t)| {
                let (mae, _) = optim::loss(LossKind::Mae, &p, &t).unwrap();
                let r = optim::rmse(&p, &t).unwrap();
                prop_assert!(mae <= r * (1.0 + 1e-12) + 1e-12);
                Ok(())
            })
            .map_err(err),
    )?;

    run(
        "clip-norm contract",
        runner()
            .run(&(values(6, 10.0), values(4, 10.0), 0.1f64..20.0), |(a, b, max)| {
                let mut ga = Matrix::new(2, 3, a.clone()).unwrap();
                let mut gb = Matrix::new(4, 1, b.clone()).unwrap();
                let before = optim::global_norm(&[&ga, &gb]);
                let reported = optim::clip_global_norm(&mut [&mut ga, &mut gb], max).unwrap();
                let after = optim::global_norm(&[&ga, &gb]);
                prop_assert!(reported == before);
                prop_assert!(after <= max * (1.0 + 1e-12));
                if before <= max {
                    prop_assert!(ga.as_slice() == &a[..] && gb.as_slice() == &b[..]);
                } else {
                    let k = max / before;
                    let orig = a.iter().chain(&b);
                    let now = ga.as_slice().iter().chain(gb.as_slice());
                    prop_assert!(orig.zip(now).all(|(o, n)| (o * k - n).abs() <= 1e-12 * o.abs().max(1.0)));
                }
                Ok(())
            })
            .map_err(err),
    )?;

    let window_count = |n: usize, t_enc: usize, h: usize| (n + 1).saturating_sub(t_enc + h);
    run(
        "window counting",
        runner()
            .run(&(20usize..80, 1usize..10, 1usize..8, 0usize..80), |(n, t_enc, h, gap)| {
                let profile = SynthProfile {
                    weather: false,
                    upstream: None,
                    ..SynthProfile::default()
                };
                let mut records = data::synth_generate(1, n, &profile);
                let expected = if gap < n {
                    records.remove(gap);
                    window_count(gap, t_enc, h) + window_count(n - gap - 1, t_enc, h)
                } else {
                    window_count(n, t_enc, h)
                };
                let (spec, _) = data::fit_normalization(&records, &FeatureSpec::with_target_and(&[])).unwrap();
                let tables = data::build_features(&records, &spec, &BTreeSet::new()).unwrap();
                let windows = data::make_windows(&tables, t_enc, h).unwrap();
                prop_assert!(windows.len() == expected, "{} windows, expected {expected}", windows.len());
                Ok(())
            })
            .map_err(err),
    )?;

    run(
        "normalization round trip",
        runner()
            .run(&(-500.0f64..500.0, -100.0f64..100.0, 1e-3f64..100.0), |(x, mean, std)| {
                let s = NormStats { mean, std };
                let back = s.denormalize(s.normalize(x));
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(mean.abs()).max(1.0));
                Ok(())
            })
            .map_err(err),
    )?;

    Ok(format!("{} properties x 128 cases: {}", passed.len(), passed.join(", ")))
}

// ---------------------------------------------------------------------------
// 10. Full experiment grid through the binary

fn grid_shape() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let d = dir.path();
    let aqs = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_aqs"))
            .current_dir(d)
            .args(args)
            .output()
            .map_err(err)?;
        check(out.status.success(), || {
            format!("aqs {args:?}: {}", String::from_utf8_lossy(&out.stderr))
        })
    };
    aqs(&["synth", "--hours", "960", "--profile", "two-regime", "--seed", "4", "--out", "s"])?;
    aqs(&[
        "experiment",
        "--data",
        "s/data.csv",
        "--seed",
        "4",
        "--pretrain-end",
        "2016-01-21T00:00",
        "--test-start",
        "2016-02-03T08:00",
        "--epochs",
        "2",
        "--hidden",
        "8",
        "--out",
        "x",
    ])?;
    let table = std::fs::read_to_string(Path::new(d).join("x/rmse_table.csv")).map_err(err)?;
    let lines: Vec<&str> = table.lines().collect();
    check(lines.first() == Some(&"setting,8h,12h,16h,20h,24h"), || format!("header {:?}", lines.first()))?;
    let labels: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    let expected = [
        "TF + RNN + MAE",
        "TF + RNNs + MAE",
        "Joint + RNN + MAE",
        "Joint + RNNs + MAE",
        "TF + RNN + MSE",
        "TF + RNNs + MSE",
        "Joint + RNN + MSE",
        "Joint + RNNs + MSE",
    ];
    check(labels == expected, || format!("rows {labels:?}"))?;
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap_or(f64::NAN)).collect();
        check(cells.len() == 5 && cells.iter().all(|v| v.is_finite() && *v > 0.0), || {
            format!("bad row {line}")
        })?;
    }
    let plots = std::fs::read_dir(d.join("x"))
        .map_err(err)?
        .filter(|e| e.as_ref().is_ok_and(|e| e.file_name().to_string_lossy().starts_with("plot_")))
        .count();
    check(plots == 40, || format!("{plots} plot files"))?;
    Ok(format!("{} rows x 5 horizons, {plots} plot files", labels.len()))
}

// ---------------------------------------------------------------------------

fn report(number: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {number:>2} {name}: {detail} ({secs:.1}s)");
            true
        }
        Err(detail) => {
            println!("FAIL {number:>2} {name}: {detail} ({secs:.1}s)");
            false
        }
    }
}

fn main() -> ExitCode {
    let bench = Benchmark::new();
    let mut full_h8: Option<(f64, f64)> = None;
    let mut results = vec![
        report(1, "gradient check", gradients),
        report(2, "cell oracle", cell_oracle),
        report(3, "optimizer oracle", adam_oracle),
        report(4, "overfit", overfit),
    ];
    results.push(report(5, "beats persistence", || {
        let r = bench.run(8, &[])?;
        full_h8 = Some(r);
        beats_persistence(r)
    }));
    results.push(report(6, "transfer advantage", transfer_advantage));
    results.push(report(7, "upstream ablation", || {
        let r = match full_h8 {
            Some(r) => r,
            None => bench.run(8, &[])?,
        };
        ablation(&bench, r)
    }));
    results.push(report(8, "determinism and persistence", determinism));
    results.push(report(9, "invariants", invariants));
    results.push(report(10, "experiment grid shape", grid_shape));
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
