use std::path::Path;
use std::time::Instant;

use privseg_core::data::{generate_dataset, DatasetConfig, Split};
use privseg_core::fed::{run_federation, FederationConfig};
use privseg_core::nn::{build_model, BackboneStyle, ModelSpec, OptimizerConfig};

use crate::config::Mode;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct BenchArgs {
    pub epochs: usize,
    pub warmup: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub batch_size: usize,
    pub n_patients: usize,
    pub n_workers: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub backbone: BackboneStyle,
    pub mode: Mode,
    pub epochs: usize,
    pub mean_s: f64,
    /// Population standard deviation (divides by the epoch count).
    pub std_s: f64,
}

/// Times whole epochs of non-private training for every backbone, locally
/// and federated. Each epoch continues from the previous epoch's weights.
pub fn run_bench(args: &BenchArgs) -> CliResult<Vec<BenchRow>> {
    if args.epochs < 3 {
        return Err(CliError::Usage(format!("bench needs at least 3 measured epochs, got {}", args.epochs)));
    }
    let ds = generate_dataset(&DatasetConfig { n_patients: args.n_patients, seed: args.seed, ..Default::default() })?;
    let train = ds.split(Split::Train);
    let mut rows = Vec::new();
    for backbone in BackboneStyle::UNETS {
        let spec = ModelSpec::new(backbone).with_base_channels(args.base_channels).with_depth(args.depth);
        let model = build_model(&spec, args.seed)?;
        for mode in [Mode::Local, Mode::Federated] {
            let n_workers = if mode == Mode::Local { 1 } else { args.n_workers };
            let steps = (train.len() / n_workers / args.batch_size.max(1)).max(1);
            let mut params = model.params().clone();
            let mut times = Vec::new();
            for e in 0..args.warmup + args.epochs {
                let cfg = FederationConfig {
                    n_workers,
                    rounds: steps,
                    optimizer: OptimizerConfig::adam(0.01),
                    batch_size: args.batch_size,
                    seed: args.seed.wrapping_add(e as u64),
                    ..Default::default()
                };
                let t = Instant::now();
                params = run_federation(&model, &params, &cfg, &train, &[])?.params;
                if e >= args.warmup {
                    times.push(t.elapsed().as_secs_f64());
                }
            }
            let n = times.len() as f64;
            let mean = times.iter().sum::<f64>() / n;
            let std = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
            rows.push(BenchRow { backbone, mode, epochs: times.len(), mean_s: mean, std_s: std });
        }
    }
    Ok(rows)
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["backbone", "mode", "epochs", "mean_s", "std_s"])?;
    for r in rows {
        w.write_record([
            r.backbone.to_string(),
            r.mode.as_str().to_string(),
            r.epochs.to_string(),
            format!("{:.6}", r.mean_s),
            format!("{:.6}", r.std_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}
