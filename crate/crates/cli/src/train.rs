use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use privseg_core::data::{generate_dataset, load_dataset, Dataset, Split};
use privseg_core::fed::{evaluate_dice, run_federation_with, write_metrics_csv, FederationRun, StopReason};
use privseg_core::nn::{build_model, count_params, ModelSpec, ParamSet};
use privseg_tensor::io::save_pten;

use crate::config::{output_root, ExperimentConfig};
use crate::error::{require, CliResult};

/// What a finished `train` run reports back to the caller.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub test_dice: Vec<f64>,
    pub test_dice_mean: f64,
    pub epsilon_final: Option<f64>,
    pub rounds_completed: usize,
    pub stop_reason: &'static str,
}

pub const SUMMARY_HEADER: [&str; 12] = [
    "name",
    "backbone",
    "mode",
    "regime",
    "params",
    "test_images",
    "test_dice_mean",
    "test_dice_std",
    "epsilon_final",
    "rounds_completed",
    "epochs_completed",
    "stop_reason",
];

pub fn load_data(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    match &cfg.data.path {
        Some(p) => {
            require("dataset directory", p)?;
            Ok(load_dataset(p)?)
        }
        None => Ok(generate_dataset(&cfg.dataset_config())?),
    }
}

/// Checkpoint metadata: enough to rebuild the architecture.
pub fn spec_meta(spec: &ModelSpec, cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("backbone".into(), spec.backbone.to_string());
    m.insert("base_channels".into(), spec.base_channels.to_string());
    m.insert("depth".into(), spec.depth.to_string());
    m.insert("kernel_size".into(), spec.kernel_size.to_string());
    m.insert("init_seed".into(), cfg.model.init_seed.to_string());
    m.insert("train_seed".into(), cfg.training.seed.to_string());
    m.insert("data_seed".into(), cfg.data.seed.to_string());
    m
}

pub fn spec_from_meta(meta: &BTreeMap<String, String>) -> CliResult<ModelSpec> {
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| crate::error::CliError::Usage(format!("checkpoint has no `{k}` entry")))
    };
    let num = |k: &str| -> CliResult<usize> {
        get(k)?.parse().map_err(|_| crate::error::CliError::Usage(format!("checkpoint entry `{k}` is not a number")))
    };
    let spec = ModelSpec {
        kernel_size: num("kernel_size")?,
        ..ModelSpec::new(get("backbone")?.parse()?)
            .with_base_channels(num("base_channels")?)
            .with_depth(num("depth")?)
    };
    spec.validate()?;
    Ok(spec)
}

pub fn run_train(cfg: &ExperimentConfig, out_override: Option<&Path>) -> CliResult<TrainSummary> {
    let out = match (out_override, &cfg.out_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p.clone(),
        (None, None) => output_root().join(&cfg.name),
    };
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;

    let spec = cfg.model_spec()?;
    let ds = load_data(cfg)?;
    let (train, val, test) = (ds.split(Split::Train), ds.split(Split::Val), ds.split(Split::Test));
    let fcfg = cfg.federation_config(train.len())?;
    let model = build_model(&spec, cfg.model.init_seed)?;

    let start = Instant::now();
    let mut marks = Vec::new();
    let mut last_epoch = None;
    let run = run_federation_with(&model, model.params(), &fcfg, &train, &val, &mut |done| {
        let e = cfg.epoch_of_round(done - 1, train.len());
        if last_epoch != Some(e) {
            marks.push((e, Instant::now()));
            last_epoch = Some(e);
        } else if let Some(m) = marks.last_mut() {
            m.1 = Instant::now();
        }
    })?;
    let train_secs = start.elapsed().as_secs_f64();

    let dice = evaluate_dice(&model, &run.params, &test)?;
    let n = dice.len().max(1) as f64;
    let mean = dice.iter().sum::<f64>() / n;
    let std = (dice.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let eps_final = run.epsilon.iter().filter_map(|e| e.last().copied()).fold(None, |a: Option<f64>, e| Some(a.map_or(e, |a| a.max(e))));
    let stop_reason = match run.stop {
        StopReason::Completed => "completed",
        StopReason::BudgetExhausted { .. } => "budget_exhausted",
    };

    write_metrics_csv(fs::File::create(out.join("metrics.csv"))?, &run.metrics)?;
    write_report(&out.join("report.csv"), cfg, &run, train.len())?;
    write_epsilon(&out.join("epsilon.csv"), &run)?;

    let mut w = csv::Writer::from_path(out.join("dice_per_image.csv"))?;
    w.write_record(["index", "patient_id", "dice"])?;
    for (i, (s, d)) in test.iter().zip(&dice).enumerate() {
        w.write_record([i.to_string(), s.patient_id.to_string(), d.to_string()])?;
    }
    w.flush()?;

    let epochs_completed = match run.rounds_completed {
        0 => 0,
        r => cfg.epoch_of_round(r - 1, train.len()) + 1,
    };
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    w.write_record([
        cfg.name.clone(),
        spec.backbone.to_string(),
        cfg.training.mode.as_str().to_string(),
        cfg.privacy.regime.clone(),
        count_params(&model).to_string(),
        dice.len().to_string(),
        mean.to_string(),
        std.to_string(),
        eps_final.map(|e| e.to_string()).unwrap_or_default(),
        run.rounds_completed.to_string(),
        epochs_completed.to_string(),
        stop_reason.to_string(),
    ])?;
    w.flush()?;

    run.params.save(&out.join("final.params"), &spec_meta(&spec, cfg))?;
    write_captures(&out, cfg, &run, &train)?;
    write_timing(&out.join("timing.log"), &marks, start, train_secs)?;

    Ok(TrainSummary {
        out_dir: out,
        test_dice: dice,
        test_dice_mean: mean,
        epsilon_final: eps_final,
        rounds_completed: run.rounds_completed,
        stop_reason,
    })
}

/// One row per epoch: mean worker loss, last validation Dice, largest ε.
fn write_report(path: &Path, cfg: &ExperimentConfig, run: &FederationRun, n_train: usize) -> CliResult<()> {
    struct Row {
        rounds: usize,
        loss_sum: f64,
        loss_n: usize,
        dice: Option<f64>,
        eps: Option<f64>,
        aborted: bool,
    }
    let mut rows: BTreeMap<usize, Row> = BTreeMap::new();
    for m in &run.metrics {
        let r = rows.entry(cfg.epoch_of_round(m.round, n_train)).or_insert(Row {
            rounds: 0,
            loss_sum: 0.0,
            loss_n: 0,
            dice: None,
            eps: None,
            aborted: false,
        });
        if let Some(l) = m.loss {
            r.loss_sum += l;
            r.loss_n += 1;
            r.rounds = r.rounds.max(m.round + 1);
        }
        r.dice = m.dice_val.or(r.dice);
        r.eps = match (r.eps, m.epsilon) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        r.aborted |= m.aborted;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "rounds_completed", "mean_loss", "dice_val", "epsilon", "aborted"])?;
    for (e, r) in rows {
        let loss = (r.loss_n > 0).then(|| r.loss_sum / r.loss_n as f64);
        w.write_record([
            e.to_string(),
            r.rounds.to_string(),
            loss.map(|v| v.to_string()).unwrap_or_default(),
            r.dice.map(|v| v.to_string()).unwrap_or_default(),
            r.eps.map(|v| v.to_string()).unwrap_or_default(),
            r.aborted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_epsilon(path: &Path, run: &FederationRun) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "worker_id", "epsilon"])?;
    let rounds = run.epsilon.iter().map(Vec::len).max().unwrap_or(0);
    for r in 0..rounds {
        for (wid, eps) in run.epsilon.iter().enumerate() {
            if let Some(e) = eps.get(r) {
                w.write_record([r.to_string(), wid.to_string(), e.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Saves recorded updates. When an update came from a single unaugmented
/// sample, that sample's image and mask are saved next to it so the attack
/// can be scored.
fn write_captures(
    out: &Path,
    cfg: &ExperimentConfig,
    run: &FederationRun,
    train: &[privseg_core::data::PhantomSample],
) -> CliResult<()> {
    for c in &run.captures {
        let stem = format!("capture_r{}_w{}", c.round, c.worker_id);
        c.save(&out.join(format!("{stem}.upd")))?;
        if let [batch] = c.batches.as_slice() {
            if let ([i], false) = (batch.as_slice(), cfg.training.augment) {
                save_pten(out.join(format!("{stem}_image.pten")), &train[*i].image)?;
                save_pten(out.join(format!("{stem}_mask.pten")), &train[*i].mask)?;
            }
        }
    }
    Ok(())
}

/// Wall-clock is kept out of the CSV outputs so those stay reproducible.
fn write_timing(path: &Path, marks: &[(usize, Instant)], start: Instant, total: f64) -> CliResult<()> {
    let mut s = String::new();
    let mut prev = start;
    for (e, t) in marks {
        let _ = writeln!(s, "epoch {e}: {:.3} s", t.duration_since(prev).as_secs_f64());
        prev = *t;
    }
    let _ = writeln!(s, "total training: {total:.3} s");
    fs::write(path, s)?;
    Ok(())
}

/// Reads back a run's final parameters together with the architecture.
pub fn load_checkpoint(path: &Path) -> CliResult<(ModelSpec, ParamSet)> {
    require("model checkpoint", path)?;
    let (params, meta) = ParamSet::load(path)?;
    Ok((spec_from_meta(&meta)?, params))
}
