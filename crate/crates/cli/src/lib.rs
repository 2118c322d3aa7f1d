//! The `privseg` command line tool.
//!
//! Subcommands: `generate` a phantom dataset, `train` from a config file,
//! `account` for ε queries, `attack` a captured update, `bench` epoch times,
//! and `report` to merge finished runs into one table.

pub mod attack;
pub mod bench;
pub mod config;
pub mod error;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use privseg_core::data::{generate_dataset, write_dataset};
use privseg_core::dp::{to_epsilon, AccountantState};

use crate::attack::{run_attack, AttackArgs};
use crate::bench::{run_bench, write_bench, BenchArgs};
use crate::config::{output_root, ExperimentConfig};
use crate::error::{require, CliError, CliResult};
use crate::train::{run_train, SUMMARY_HEADER};

#[derive(Parser, Debug)]
#[command(name = "privseg", version, about = "Private federated segmentation experiments")]
pub struct Cli {
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic phantom dataset.
    Generate(GenerateCmd),
    /// Train a model as described by a config file.
    Train(TrainCmd),
    /// Privacy loss of the subsampled Gaussian mechanism after some steps.
    Account(AccountCmd),
    /// Reconstruct a training image from a captured update.
    Attack(AttackCmd),
    /// Time training epochs for every backbone, local and federated.
    Bench(BenchCmd),
    /// Merge the summaries of finished runs into one CSV.
    Report(ReportCmd),
}

#[derive(Args, Debug)]
pub struct GenerateCmd {
    /// Take defaults from the `[data]` section of this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub n_patients: Option<usize>,
    #[arg(long)]
    pub slices_per_patient: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write one PGM preview per sample.
    #[arg(long)]
    pub preview: bool,
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AccountCmd {
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub sampling_rate: f64,
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
}

#[derive(Args, Debug)]
pub struct AttackCmd {
    #[arg(long)]
    pub capture: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Checkpoint of the attacked architecture (any run's `final.params`).
    #[arg(long)]
    pub model: PathBuf,
    /// True image, for scoring and the triptych.
    #[arg(long)]
    pub original: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    #[arg(long, default_value_t = 2.0)]
    pub divergence_factor: f64,
    /// Attack with a random mask instead of the victim's.
    #[arg(long)]
    pub random_mask: bool,
    #[arg(long, default_value_t = 10)]
    pub baselines: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchCmd {
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 4)]
    pub base_channels: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 120)]
    pub n_patients: usize,
    #[arg(long, default_value_t = 3)]
    pub n_workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportCmd {
    /// Run directories, each holding a `summary.csv`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate(c) => generate(c),
        Command::Train(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let s = run_train(&cfg, c.out_dir.as_deref())?;
            println!(
                "{}: test dice {:.4} over {} images, {} rounds, {}{}",
                s.out_dir.display(),
                s.test_dice_mean,
                s.test_dice.len(),
                s.rounds_completed,
                s.stop_reason,
                s.epsilon_final.map(|e| format!(", epsilon {e:.4}")).unwrap_or_default()
            );
            Ok(())
        }
        Command::Account(c) => {
            let acct = AccountantState::new(c.sampling_rate, c.sigma)?.after(c.steps);
            let (eps, alpha) = to_epsilon(&acct, c.delta)?;
            println!("epsilon,best_alpha\n{eps},{alpha}");
            Ok(())
        }
        Command::Attack(c) => {
            let args = AttackArgs {
                capture: c.capture,
                mask: c.mask,
                model: c.model,
                original: c.original,
                iters: c.iters,
                lr: c.lr,
                seed: c.seed,
                patience: c.patience,
                divergence_factor: c.divergence_factor,
                random_mask: c.random_mask,
                baselines: c.baselines,
                out_dir: c.out_dir.unwrap_or_else(|| output_root().join("attack")),
            };
            let o = run_attack(&args)?;
            let r = &o.result;
            print!("{}: {} iterations ({}), best loss {:.6}", args.out_dir.display(), r.iterations, r.stop_reason.as_str(), r.best_loss);
            if let (Some(psnr), Some(base)) = (r.psnr, o.baseline_psnr) {
                print!(", psnr {psnr:.2} dB vs best random {base:.2} dB");
            }
            println!();
            Ok(())
        }
        Command::Bench(c) => {
            let args = BenchArgs {
                epochs: c.epochs,
                warmup: c.warmup,
                base_channels: c.base_channels,
                depth: c.depth,
                batch_size: c.batch_size,
                n_patients: c.n_patients,
                n_workers: c.n_workers,
                seed: c.seed,
            };
            let out = c.out_dir.unwrap_or_else(|| output_root().join("bench"));
            std::fs::create_dir_all(&out)?;
            let rows = run_bench(&args)?;
            write_bench(&out.join("bench.csv"), &rows)?;
            for r in &rows {
                println!("{:<20} {:<9} {:.3} ± {:.3} s", r.backbone.as_str(), r.mode.as_str(), r.mean_s, r.std_s);
            }
            Ok(())
        }
        Command::Report(c) => report(&c.runs, &c.out),
    }
}

fn generate(c: GenerateCmd) -> CliResult<()> {
    let base = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut d = base.dataset_config();
    d.n_patients = c.n_patients.unwrap_or(d.n_patients);
    d.slices_per_patient = c.slices_per_patient.unwrap_or(d.slices_per_patient);
    d.height = c.height.unwrap_or(d.height);
    d.width = c.width.unwrap_or(d.width);
    d.seed = c.seed.unwrap_or(d.seed);
    let out = c.out_dir.unwrap_or_else(|| output_root().join("dataset"));
    let ds = generate_dataset(&d)?;
    write_dataset(&out, &ds, c.preview)?;
    let manifest = std::fs::read(out.join("manifest.csv"))?;
    let (tr, va, te) = ds.manifest.sizes();
    println!(
        "{}: {} samples, split {tr}/{va}/{te}, manifest sha256 {}",
        out.display(),
        ds.samples.len(),
        hex(&Sha256::digest(&manifest))
    );
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Concatenates `summary.csv` rows, adding the run directory as a column.
pub fn report(runs: &[PathBuf], out: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["run_dir"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    for dir in runs {
        let path = dir.join("summary.csv");
        require("run summary", &path)?;
        let mut r = csv::Reader::from_path(&path)?;
        if r.headers()?.iter().ne(SUMMARY_HEADER) {
            return Err(CliError::Usage(format!("{}: unexpected columns", path.display())));
        }
        for rec in r.records() {
            let rec = rec?;
            let mut row = vec![dir.display().to_string()];
            row.extend(rec.iter().map(str::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
