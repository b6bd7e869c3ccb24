use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aqs_core::data::{self, FeatureSpec, HourlyRecord, SynthProfile};
use aqs_core::eval::{self, ExperimentData, GridConfig, Strategy};
use aqs_core::optim::LossKind;
use aqs_core::rnn::CellVariant;
use aqs_core::seq2seq::{Decoding, ModelDims};
use aqs_core::train::{self, Checkpoint, GradCheckConfig, TrainConfig};
use chrono::NaiveDate;

use crate::config::{self, DataConfig, DataFlags, FileConfig, LoadedConfig};
use crate::manifest::Manifest;
use crate::{Cli, Command, DecodingArg, Profile, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    file: LoadedConfig,
    seed: Option<u64>,
    out: PathBuf,
}

impl Ctx {
    fn required_seed(&self, command: &str) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None if self.file.seed_in_file => Ok(self.file.config.train.seed),
            None => Err(usage(format!(
                "`{command}` requires --seed (or train.seed in the config file)"
            ))),
        }
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = config::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    let ctx = Ctx {
        file,
        seed: cli.seed,
        out: cli.out.unwrap_or_else(|| PathBuf::from("out")),
    };
    match cli.command {
        Command::Synth {
            hours,
            profile,
            station,
            noise,
        } => synth(&ctx, hours, profile, station, noise),
        Command::Prepare {
            inputs,
            covariates,
            data,
        } => prepare(&ctx, &inputs, covariates.as_deref(), &data),
        Command::Train {
            data,
            train,
            data_flags,
        } => {
            let seed = ctx.required_seed("train")?;
            let mut cfg = ctx.file.config.train.clone();
            train.apply(&mut cfg);
            cfg.seed = seed;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let dcfg = data_config(&ctx.file.config, &data_flags)?;
            train_cmd(&ctx, &data, cfg, dcfg)
        }
        Command::Transfer {
            base,
            data,
            train,
            data_flags,
        } => {
            let dcfg = data_config(&ctx.file.config, &data_flags)?;
            transfer_cmd(&ctx, &base, &data, &train, dcfg)
        }
        Command::Predict {
            model,
            data,
            data_flags,
        } => {
            let dcfg = data_config(&ctx.file.config, &data_flags)?;
            predict_cmd(&ctx, &model, &data, dcfg)
        }
        Command::Evaluate {
            model,
            data,
            horizon,
            data_flags,
        } => {
            let dcfg = data_config(&ctx.file.config, &data_flags)?;
            evaluate_cmd(&ctx, &model, &data, horizon, dcfg)
        }
        Command::Experiment {
            data,
            test_start,
            pretrain_end,
            strategies,
            depths,
            losses,
            horizons,
            train,
            data_flags,
        } => {
            let seed = ctx.required_seed("experiment")?;
            let fc = &ctx.file.config;
            let mut cfg = fc.train.clone();
            train.apply(&mut cfg);
            cfg.seed = seed;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let dcfg = data_config(fc, &data_flags)?;
            let ex = &fc.experiment;
            let parse_list = |v: &Option<Vec<String>>| -> Result<Option<Vec<String>>> { Ok(v.clone()) };
            let strategies: Vec<Strategy> = match parse_list(&strategies)? {
                Some(v) => v
                    .iter()
                    .map(|s| s.parse().map_err(|e: aqs_core::Error| usage(e.to_string())))
                    .collect::<Result<_>>()?,
                None => ex.strategies.clone(),
            };
            let losses: Vec<LossKind> = match losses {
                Some(v) => v
                    .iter()
                    .map(|s| s.parse().map_err(|e: aqs_core::Error| usage(e.to_string())))
                    .collect::<Result<_>>()?,
                None => ex.losses.clone(),
            };
            let depths = depths.unwrap_or_else(|| ex.depths.clone());
            let horizons = horizons.unwrap_or_else(|| ex.horizons.clone());
            if depths.contains(&0) || horizons.contains(&0) {
                return Err(usage("depths and horizons must be positive"));
            }
            let test_start = test_start
                .or_else(|| ex.test_start.clone())
                .ok_or_else(|| usage("`experiment` requires --test-start"))?;
            let test_start = data::parse_timestamp(&test_start).map_err(|e| usage(e.to_string()))?;
            let pretrain_end = pretrain_end
                .or_else(|| ex.pretrain_end.clone())
                .map(|s| data::parse_timestamp(&s).map_err(|e| usage(e.to_string())))
                .transpose()?;
            let grid = GridConfig {
                strategies,
                depths,
                losses,
                horizons,
                train: cfg,
                val_fraction: dcfg.val_fraction,
                drop_features: dcfg.drop_features.clone(),
            };
            experiment_cmd(&ctx, &data, grid, dcfg, pretrain_end, test_start)
        }
        Command::Gradcheck {
            input,
            hidden,
            depth,
            t_enc,
            horizon,
            batch,
            variant,
            loss,
            decoding,
            tolerance,
        } => {
            let dims = ModelDims {
                input,
                hidden,
                depth,
                t_enc,
                horizon,
            };
            gradcheck_cmd(&ctx, dims, batch, variant, loss, decoding, tolerance)
        }
    }
}

fn data_config(file: &FileConfig, flags: &DataFlags) -> Result<DataConfig> {
    let mut d = file.data.clone();
    flags.apply(&mut d);
    if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
        return Err(usage(format!("val_fraction must be in (0,1), got {}", d.val_fraction)));
    }
    Ok(d)
}

fn create_out(ctx: &Ctx) -> Result<()> {
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))
}

fn load_holidays(d: &DataConfig, manifest: &mut Manifest) -> Result<BTreeSet<NaiveDate>> {
    match &d.holidays {
        Some(p) => {
            manifest.input(p);
            Ok(data::load_holidays(p)?)
        }
        None => Ok(BTreeSet::new()),
    }
}

/// Loads a dataset CSV and repairs gaps. Returns records and covariate
/// column names.
fn load_dataset(path: &Path, d: &DataConfig, manifest: &mut Manifest) -> Result<(Vec<HourlyRecord>, Vec<String>)> {
    manifest.input(path);
    let loaded = data::load_csv(path)?;
    if !loaded.rejects.is_empty() {
        log::warn!("{}: {} rows rejected", path.display(), loaded.rejects.len());
    }
    let (records, report) = data::fill_missing(&loaded.records, d.max_gap_hours);
    log::info!(
        "{}: {} records, {} gap entries",
        path.display(),
        records.len(),
        report.entries.len()
    );
    if records.is_empty() {
        bail!("{} contains no usable records", path.display());
    }
    Ok((records, loaded.feature_columns))
}

fn resolve_spec(d: &DataConfig, columns: &[String]) -> FeatureSpec {
    let base = match &d.features {
        Some(f) => FeatureSpec::new(f.clone()),
        None => FeatureSpec::with_target_and(columns),
    };
    base.without(&d.drop_features)
}

fn synth(ctx: &Ctx, hours: usize, profile: Profile, station: String, noise: f64) -> Result<()> {
    if hours == 0 {
        return Err(usage("--hours must be at least 1"));
    }
    if !(noise >= 0.0) {
        return Err(usage("--noise must be non-negative"));
    }
    let seed = ctx.seed.unwrap_or(0);
    create_out(ctx)?;
    let with = |p: SynthProfile| SynthProfile {
        station_id: station.clone(),
        noise_std: noise,
        ..p
    };
    let records = match profile {
        Profile::Default => data::synth_generate(seed, hours, &with(SynthProfile::default())),
        Profile::NoUpstream => data::synth_generate(seed, hours, &with(SynthProfile::without_upstream())),
        Profile::TwoRegime => {
            let first = hours / 2;
            data::synth_two_regime(
                seed,
                &with(SynthProfile::default()),
                first,
                &with(SynthProfile::shifted()),
                hours - first,
            )
        }
    };
    let path = ctx.out_file("data.csv");
    data::write_csv(&path, &records)?;
    let mut m = Manifest::new("synth");
    m.set("seed", seed);
    m.set("hours", hours);
    m.set("profile", format!("{profile:?}"));
    m.set("station", &station);
    m.set("noise", noise);
    if profile == Profile::TwoRegime {
        m.set("regime_boundary", data::format_timestamp(&records[hours / 2].timestamp));
    }
    m.output(&path);
    m.write(&ctx.out)?;
    println!("wrote {} rows to {}", records.len(), path.display());
    Ok(())
}

fn prepare(ctx: &Ctx, inputs: &[PathBuf], covariates: Option<&Path>, flags: &DataFlags) -> Result<()> {
    let d = data_config(&ctx.file.config, flags)?;
    create_out(ctx)?;
    let mut m = Manifest::new("prepare");
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut columns: BTreeSet<String> = BTreeSet::new();
    for p in inputs {
        m.input(p);
        let loaded = data::load_csv(p)?;
        rejects.extend(loaded.rejects.into_iter().map(|mut r| {
            r.reason = format!("{}: {}", p.display(), r.reason);
            r
        }));
        columns.extend(loaded.feature_columns);
        records.extend(loaded.records);
    }
    let rejects_path = ctx.out_file("rejects.csv");
    if let Some(c) = covariates {
        m.input(c);
        let cov = data::load_covariates_csv(c)?;
        rejects.extend(cov.rejects.into_iter().map(|mut r| {
            r.reason = format!("{}: {}", c.display(), r.reason);
            r
        }));
        columns.extend(cov.feature_columns);
        let (joined, report) = data::join_sources(&cov.records, &records)?;
        let join_path = ctx.out_file("join_report.csv");
        report.write_csv(&join_path)?;
        m.set("joined_rows", joined.len());
        m.set("unmatched_keys", report.unmatched.len());
        m.output(&join_path);
        records = joined;
    }
    data::write_rejections(&rejects_path, &rejects)?;
    let (repaired, gaps) = data::fill_missing(&records, d.max_gap_hours);
    let prepared_path = ctx.out_file("prepared.csv");
    data::write_csv(&prepared_path, &repaired)?;
    let gaps_path = ctx.out_file("gap_report.csv");
    gaps.write_csv(&gaps_path)?;

    let columns: Vec<String> = columns.into_iter().collect();
    let spec = resolve_spec(&d, &columns);
    let holidays = load_holidays(&d, &mut m)?;
    // Validate the feature list against the data.
    let (fitted, warnings) = data::fit_normalization(&repaired, &spec)?;
    data::build_features(&repaired, &fitted, &holidays)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    m.set("rows", repaired.len());
    m.set("rejected_rows", rejects.len());
    m.set("inserted_rows", gaps.inserted_rows);
    m.set("gap_entries", gaps.entries.len());
    m.set("numeric_features", spec.numeric.join(","));
    m.set("feature_dim", spec.dim());
    m.config(toml::to_string(&d)?);
    for p in [&prepared_path, &rejects_path, &gaps_path] {
        m.output(p);
    }
    m.write(&ctx.out)?;
    println!(
        "prepared {} rows ({} rejected, {} gap entries), feature dimension {}",
        repaired.len(),
        rejects.len(),
        gaps.entries.len(),
        spec.dim()
    );
    Ok(())
}

fn write_history(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for r in &ck.history {
        writeln!(s, "{},{:.16e},{:.16e}", r.epoch, r.train_loss, r.val_loss)?;
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn split_windows(
    windows: Vec<data::WindowSample>,
    seed: u64,
    fraction: f64,
) -> Result<(Vec<data::WindowSample>, Vec<data::WindowSample>)> {
    if windows.is_empty() {
        bail!("no complete windows in the data for the configured encoder length and horizon");
    }
    if windows.len() < 2 {
        return Ok((windows, Vec::new()));
    }
    Ok(data::split_train_val(windows, seed, fraction)?)
}

fn save_training_outputs(ctx: &Ctx, ck: &Checkpoint, m: &mut Manifest) -> Result<()> {
    let model_path = ctx.out_file("model.ckpt");
    ck.save(&model_path)?;
    let hist_path = ctx.out_file("history.csv");
    write_history(&hist_path, ck)?;
    m.set("fingerprint", ck.fingerprint());
    m.set("epochs_run", ck.history.len());
    if let Some(b) = ck.best_epoch() {
        m.set("best_epoch", b.epoch);
        m.set("best_val_loss", format!("{:.16e}", b.val_loss));
    }
    m.output(&model_path);
    m.output(&hist_path);
    m.write(&ctx.out)?;
    println!("wrote {}", model_path.display());
    Ok(())
}

fn train_cmd(ctx: &Ctx, data_path: &Path, cfg: TrainConfig, d: DataConfig) -> Result<()> {
    create_out(ctx)?;
    let mut m = Manifest::new("train");
    let (records, columns) = load_dataset(data_path, &d, &mut m)?;
    let holidays = load_holidays(&d, &mut m)?;
    let (spec, warnings) = data::fit_normalization(&records, &resolve_spec(&d, &columns))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let tables = data::build_features(&records, &spec, &holidays)?;
    let windows = data::make_windows(&tables, cfg.t_enc, cfg.horizon)?;
    let (tr, va) = split_windows(windows, cfg.seed, d.val_fraction)?;
    log::info!("{} training and {} validation windows", tr.len(), va.len());
    let ck = train::train(&tr, &va, &spec, &cfg)?;
    m.set("seed", cfg.seed);
    m.set("feature_dim", spec.dim());
    m.set("train_windows", tr.len());
    m.set("val_windows", va.len());
    m.config(format!("[train]\n{}\n[data]\n{}", cfg.to_toml(), toml::to_string(&d)?));
    save_training_outputs(ctx, &ck, &mut m)
}

fn transfer_cmd(ctx: &Ctx, base_path: &Path, data_path: &Path, flags: &crate::config::TrainFlags, d: DataConfig) -> Result<()> {
    create_out(ctx)?;
    let mut m = Manifest::new("transfer");
    m.input(base_path);
    let base = Checkpoint::load(base_path)?;
    let mut cfg = base.config.clone();
    flags.apply(&mut cfg);
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    let (records, _) = load_dataset(data_path, &d, &mut m)?;
    let holidays = load_holidays(&d, &mut m)?;
    let tables = data::build_features(&records, &base.spec, &holidays)?;
    let windows = data::make_windows(&tables, base.config.t_enc, base.config.horizon)?;
    let (tr, va) = split_windows(windows, cfg.seed, d.val_fraction)?;
    let ck = train::transfer_train(&base, &tr, &va, &cfg)?;
    m.set("seed", ck.config.seed);
    m.set("base_fingerprint", base.fingerprint());
    m.set("train_windows", tr.len());
    m.set("val_windows", va.len());
    m.config(format!("[train]\n{}\n[data]\n{}", ck.config.to_toml(), toml::to_string(&d)?));
    save_training_outputs(ctx, &ck, &mut m)
}

fn predict_cmd(ctx: &Ctx, model: &Path, data_path: &Path, d: DataConfig) -> Result<()> {
    create_out(ctx)?;
    let mut m = Manifest::new("predict");
    m.input(model);
    let ck = Checkpoint::load(model)?;
    let (records, _) = load_dataset(data_path, &d, &mut m)?;
    let holidays = load_holidays(&d, &mut m)?;
    let tables = data::build_features(&records, &ck.spec, &holidays)?;
    let forecasts = eval::forecast(&ck, &tables)?;
    if forecasts.is_empty() {
        bail!("no station has {} complete consecutive hours to forecast from", ck.config.t_enc);
    }
    let mut s = String::from("station_id,timestamp,predicted\n");
    for f in &forecasts {
        for (t, v) in f.times.iter().zip(&f.values) {
            writeln!(s, "{},{},{:.16e}", f.station_id, data::format_timestamp(t), v)?;
        }
    }
    let path = ctx.out_file("forecast.csv");
    std::fs::write(&path, s)?;
    m.set("fingerprint", ck.fingerprint());
    m.set("stations", forecasts.len());
    m.output(&path);
    m.write(&ctx.out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, model: &Path, data_path: &Path, horizon: Option<usize>, d: DataConfig) -> Result<()> {
    let ck = Checkpoint::load(model)?;
    let horizon = horizon.unwrap_or(ck.config.horizon);
    if horizon != ck.config.horizon {
        bail!(aqs_core::Error::Horizon {
            checkpoint: ck.config.horizon,
            requested: horizon,
        });
    }
    create_out(ctx)?;
    let mut m = Manifest::new("evaluate");
    m.input(model);
    let (records, _) = load_dataset(data_path, &d, &mut m)?;
    let holidays = load_holidays(&d, &mut m)?;
    let tables = data::build_features(&records, &ck.spec, &holidays)?;
    let windows = data::make_windows(&tables, ck.config.t_enc, horizon)?;
    let e = eval::evaluate(&ck, &windows, horizon)?;
    let p = eval::persistence_baseline(&windows, horizon, ck.spec.target())?;

    let mut metrics = String::from("metric,step,value\n");
    writeln!(metrics, "rmse,pooled,{:.16e}", e.rmse)?;
    for (k, v) in e.per_step.iter().enumerate() {
        writeln!(metrics, "rmse,{},{:.16e}", k + 1, v)?;
    }
    writeln!(metrics, "persistence_rmse,pooled,{:.16e}", p.rmse)?;
    let metrics_path = ctx.out_file("metrics.csv");
    std::fs::write(&metrics_path, metrics)?;
    let plot_path = ctx.out_file(&format!("plot_{horizon}h.csv"));
    std::fs::write(&plot_path, eval::render_plot_csv(&e))?;
    let mut summary = format!(
        "windows: {}\nRMSE {horizon}h (pooled): {:.2}\npersistence {horizon}h: {:.2}\nper step:",
        windows.len(),
        e.rmse,
        p.rmse
    );
    for v in &e.per_step {
        write!(summary, " {v:.2}")?;
    }
    summary.push('\n');
    let summary_path = ctx.out_file("summary.txt");
    std::fs::write(&summary_path, &summary)?;
    m.set("fingerprint", ck.fingerprint());
    m.set("horizon", horizon);
    m.set("windows", windows.len());
    for p in [&metrics_path, &plot_path, &summary_path] {
        m.output(p);
    }
    m.write(&ctx.out)?;
    print!("{summary}");
    Ok(())
}

fn experiment_cmd(
    ctx: &Ctx,
    data_path: &Path,
    grid: GridConfig,
    d: DataConfig,
    pretrain_end: Option<chrono::NaiveDateTime>,
    test_start: chrono::NaiveDateTime,
) -> Result<()> {
    if grid.strategies.contains(&Strategy::Tf) && pretrain_end.is_none() {
        return Err(usage("the tf strategy requires --pretrain-end"));
    }
    create_out(ctx)?;
    let mut m = Manifest::new("experiment");
    let (records, columns) = load_dataset(data_path, &d, &mut m)?;
    let holidays = load_holidays(&d, &mut m)?;
    let spec = match &d.features {
        Some(f) => FeatureSpec::new(f.clone()),
        None => FeatureSpec::with_target_and(&columns),
    };
    let data = ExperimentData {
        dataset_id: data_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        records,
        holidays,
        spec,
        pretrain_end,
        test_start,
    };
    let result = eval::experiment_grid(&data, &grid)?;
    let written = eval::emit_report(&result.table, &result.evaluations, &ctx.out)?;
    m.set("seed", grid.train.seed);
    m.set("rows", result.table.rows.len());
    m.set("horizons", join(&grid.horizons));
    m.set("test_start", data::format_timestamp(&test_start));
    if let Some(p) = pretrain_end {
        m.set("pretrain_end", data::format_timestamp(&p));
    }
    let strategies: Vec<String> = grid.strategies.iter().map(|s| format!("{s:?}").to_lowercase()).collect();
    let losses: Vec<String> = grid.losses.iter().map(|l| l.label().to_lowercase()).collect();
    m.config(format!(
        "[train]\n{}\n[data]\n{}\n[experiment]\nstrategies = {:?}\ndepths = [{}]\nlosses = {:?}\nhorizons = [{}]",
        grid.train.to_toml(),
        toml::to_string(&d)?,
        strategies,
        join(&grid.depths),
        losses,
        join(&grid.horizons),
    ));
    for f in &written {
        m.output(&ctx.out_file(f));
    }
    m.write(&ctx.out)?;
    print!("{}", std::fs::read_to_string(ctx.out_file("summary.txt"))?);
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
}

fn gradcheck_cmd(
    ctx: &Ctx,
    dims: ModelDims,
    batch: usize,
    variant: Option<CellVariant>,
    loss: Option<LossKind>,
    decoding: Option<DecodingArg>,
    tolerance: f64,
) -> Result<()> {
    if [dims.input, dims.hidden, dims.depth, dims.t_enc, dims.horizon, batch].contains(&0) {
        return Err(usage("gradcheck dimensions must be positive"));
    }
    let variants = variant.map_or(vec![CellVariant::InputCandidate, CellVariant::RecurrentCandidate], |v| vec![v]);
    let losses = loss.map_or(vec![LossKind::Mse, LossKind::Mae], |l| vec![l]);
    let decodings = match decoding {
        Some(DecodingArg::Tf) => vec![Decoding::TeacherForced],
        Some(DecodingArg::Ar) => vec![Decoding::Autoregressive],
        None => vec![Decoding::TeacherForced, Decoding::Autoregressive],
    };
    create_out(ctx)?;
    let seed = ctx.seed.unwrap_or(7);
    let mut csv = String::from("variant,loss,decoding,tensor,count,max_rel_err,max_abs_err\n");
    let mut worst: f64 = 0.0;
    for &v in &variants {
        for &l in &losses {
            for &dec in &decodings {
                let report = train::gradient_check(&GradCheckConfig {
                    dims,
                    variant: v,
                    loss: l,
                    decoding: dec,
                    batch,
                    seed,
                    eps: 1e-5,
                })?;
                let dec_label = if dec == Decoding::TeacherForced { "tf" } else { "ar" };
                for e in &report.entries {
                    writeln!(
                        csv,
                        "{},{},{},{},{},{:.6e},{:.6e}",
                        v.as_str(),
                        l.label(),
                        dec_label,
                        e.name,
                        e.count,
                        e.max_rel_err,
                        e.max_abs_err
                    )?;
                }
                println!(
                    "{:<20} {} {}  max relative error {:.3e}",
                    v.as_str(),
                    l.label(),
                    dec_label,
                    report.max_rel_err
                );
                worst = worst.max(report.max_rel_err);
            }
        }
    }
    let path = ctx.out_file("gradcheck.csv");
    std::fs::write(&path, csv)?;
    let mut m = Manifest::new("gradcheck");
    m.set("seed", seed);
    m.set("dims", format!("{dims:?}"));
    m.set("max_rel_err", format!("{worst:.6e}"));
    m.output(&path);
    m.write(&ctx.out)?;
    if worst >= tolerance {
        bail!("max relative error {worst:.3e} exceeds tolerance {tolerance:e}");
    }
    Ok(())
}
