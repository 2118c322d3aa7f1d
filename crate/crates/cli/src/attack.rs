use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use privseg_core::data::pgm::{side_by_side, write_pgm};
use privseg_core::fed::GradientUpdate;
use privseg_core::inversion::{invert, random_baseline_psnr, random_mask, AttackConfig, AttackResult};
use privseg_core::nn::build_model;
use privseg_tensor::io::{load_pten, save_pten};
use privseg_tensor::Tensor;

use crate::error::{require, CliError, CliResult};
use crate::train::load_checkpoint;

#[derive(Clone, Debug, Serialize)]
pub struct AttackArgs {
    pub capture: PathBuf,
    /// Victim mask; `None` requires `random_mask`.
    pub mask: Option<PathBuf>,
    pub model: PathBuf,
    /// Ground truth for scoring and the triptych.
    pub original: Option<PathBuf>,
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
    pub patience: usize,
    pub divergence_factor: f64,
    pub random_mask: bool,
    pub baselines: usize,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub result: AttackResult,
    /// Best PSNR among the uniform-noise baselines, when scored.
    pub baseline_psnr: Option<f64>,
}

pub fn run_attack(args: &AttackArgs) -> CliResult<AttackOutcome> {
    require("capture file", &args.capture)?;
    let (spec, _) = load_checkpoint(&args.model)?;
    let update = GradientUpdate::load(&args.capture)?;
    let model = build_model(&spec, 0)?;
    model.check_params(&update.global)?;
    let target = update.gradient()?;

    let mask = match (&args.mask, args.random_mask) {
        (Some(p), false) => {
            require("mask file", p)?;
            load_pten(p)?
        }
        (None, true) => {
            let (h, w) = match &args.original {
                Some(p) => {
                    require("original image", p)?;
                    let t = load_pten(p)?;
                    let s = t.shape();
                    (s[s.len() - 2], s[s.len() - 1])
                }
                None => return Err(CliError::Usage("--random-mask needs --original for the image size".into())),
            };
            random_mask(h, w, args.seed)?
        }
        (Some(_), true) => return Err(CliError::Usage("--mask and --random-mask are exclusive".into())),
        (None, false) => return Err(CliError::Usage("either --mask or --random-mask is required".into())),
    };
    let original = match &args.original {
        Some(p) => {
            require("original image", p)?;
            Some(load_pten(p)?)
        }
        None => None,
    };

    let cfg = AttackConfig {
        max_iters: args.iters,
        lr: args.lr,
        init_seed: args.seed,
        divergence_patience: args.patience,
        divergence_factor: args.divergence_factor,
        record_curve: true,
    };
    let mut result = invert(&model, &update.global, &target, &mask, &cfg, None)?;

    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("attack.toml"), toml::to_string(args).expect("args serialize"))?;
    let rec = result.reconstruction.clone();
    let (h, w) = (rec.shape()[2], rec.shape()[3]);
    write_pgm(&args.out_dir.join("reconstruction.pgm"), rec.data(), h, w)?;
    save_pten(args.out_dir.join("reconstruction.pten"), &rec)?;

    let mut csv_out = csv::Writer::from_path(args.out_dir.join("attack_metrics.csv"))?;
    csv_out.write_record(["iteration", "loss"])?;
    for (i, l) in result.loss_curve.iter().enumerate() {
        csv_out.write_record([i.to_string(), l.to_string()])?;
    }
    csv_out.flush()?;

    let mut baseline_psnr = None;
    if let Some(orig) = &original {
        let orig = orig.with_shape(rec.shape())?;
        result.score(&orig)?;
        let base = random_baseline_psnr(&orig, args.baselines, args.seed.wrapping_add(1))?;
        baseline_psnr = base.iter().cloned().reduce(f64::max);
        write_triptych(&args.out_dir.join("triptych.pgm"), &orig, &rec, h, w)?;
    }

    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = csv::Writer::from_path(args.out_dir.join("attack_summary.csv"))?;
    s.write_record(["iterations", "best_iter", "best_loss", "stop_reason", "mse", "psnr", "baseline_best_psnr"])?;
    s.write_record([
        result.iterations.to_string(),
        result.best_iter.to_string(),
        result.best_loss.to_string(),
        result.stop_reason.as_str().to_string(),
        opt(result.mse),
        opt(result.psnr),
        opt(baseline_psnr),
    ])?;
    s.flush()?;
    Ok(AttackOutcome { result, baseline_psnr })
}

/// Original, reconstruction and absolute difference, left to right.
fn write_triptych(path: &Path, orig: &Tensor, rec: &Tensor, h: usize, w: usize) -> CliResult<()> {
    let diff: Vec<f64> = orig.data().iter().zip(rec.data()).map(|(a, b)| (a - b).abs()).collect();
    let (v, th, tw) = side_by_side(&[orig.data(), rec.data(), &diff], h, w)?;
    write_pgm(path, &v, th, tw)?;
    Ok(())
}
