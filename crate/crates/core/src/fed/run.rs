use privseg_tensor::rng::{stream_id, CounterRng};
use privseg_tensor::{no_grad, Tensor};
use rayon::prelude::*;

use super::config::FederationConfig;
use super::message::{aggregate, GradientUpdate, UpdateMessage};
use super::partition::partition_by_patient;
use crate::data::{augment, PhantomSample};
use crate::dp::{dp_sgd_step, to_epsilon, AccountantState};
use crate::error::{invalid, Error, Result};
use crate::nn::{dice_score, loss_and_grad, predict_mask, Model, Optimizer, ParamSet};

const BATCH_STREAM: u64 = 0xBA7C;
const NOISE_STREAM: u64 = 0x9015E;
const AUGMENT_STREAM: u64 = 0xA06;

/// One site: its shard, optimizer state, accountant and random streams.
#[derive(Clone, Debug)]
pub struct WorkerState {
    pub id: usize,
    /// Indices into the training samples.
    pub shard: Vec<usize>,
    pub params: ParamSet,
    pub optimizer: Optimizer,
    pub accountant: Option<AccountantState>,
    batch_rng: CounterRng,
    noise_rng: CounterRng,
    augment_rng: CounterRng,
    order: Vec<usize>,
    cursor: usize,
}

impl WorkerState {
    pub fn new(id: usize, shard: Vec<usize>, params: ParamSet, cfg: &FederationConfig) -> Result<WorkerState> {
        if shard.is_empty() {
            return Err(invalid(format!("worker {id} has an empty shard")));
        }
        let b = effective_batch(cfg.batch_size, shard.len());
        let accountant = match &cfg.regime {
            Some(r) => Some(AccountantState::new(b as f64 / shard.len() as f64, r.noise_multiplier)?),
            None => None,
        };
        let id64 = id as u64;
        Ok(WorkerState {
            id,
            optimizer: Optimizer::new(cfg.optimizer, params.numel()),
            params,
            accountant,
            batch_rng: CounterRng::new(cfg.seed, stream_id(&[BATCH_STREAM, id64])),
            noise_rng: CounterRng::new(cfg.seed, stream_id(&[NOISE_STREAM, id64])),
            augment_rng: CounterRng::new(cfg.seed, stream_id(&[AUGMENT_STREAM, id64])),
            order: Vec::new(),
            cursor: 0,
            shard,
        })
    }

    /// Sampling rate `B / n_local`.
    pub fn sampling_rate(&self, batch_size: usize) -> f64 {
        effective_batch(batch_size, self.shard.len()) as f64 / self.shard.len() as f64
    }

    /// Next minibatch: walks a shuffled pass over the shard, reshuffling when
    /// fewer than `batch_size` unseen samples remain. A batch covering the
    /// whole shard is the shard in order.
    fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        let b = effective_batch(batch_size, self.shard.len());
        if b == self.shard.len() {
            return self.shard.clone();
        }
        if self.order.is_empty() || self.cursor + b > self.order.len() {
            self.order = self.shard.clone();
            self.batch_rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + b].to_vec();
        self.cursor += b;
        batch
    }
}

fn effective_batch(batch_size: usize, n: usize) -> usize {
    if batch_size == 0 {
        n
    } else {
        batch_size.min(n)
    }
}

/// Result of one round of local training.
#[derive(Clone, Debug)]
pub struct LocalOutcome {
    pub message: UpdateMessage,
    /// Mean training loss over the round's steps.
    pub loss: f64,
    pub batches: Vec<Vec<usize>>,
}

/// Starts the replica from `global`, runs `cfg.sync_every` optimizer steps
/// (DP-SGD when a regime is set) and returns the parameter delta.
pub fn local_train(
    worker: &mut WorkerState,
    model: &Model,
    global: &ParamSet,
    data: &[PhantomSample],
    cfg: &FederationConfig,
    round: usize,
) -> Result<LocalOutcome> {
    if cfg.sync_every == 0 {
        return Err(Error::InvalidConfig("sync_every must be at least 1".into()));
    }
    worker.params = global.clone();
    let mut losses = Vec::with_capacity(cfg.sync_every);
    let mut batches = Vec::with_capacity(cfg.sync_every);
    for _ in 0..cfg.sync_every {
        let idx = worker.next_batch(cfg.batch_size);
        let mut pairs = Vec::with_capacity(idx.len());
        for &i in &idx {
            let s = data.get(i).ok_or_else(|| invalid(format!("sample index {i} out of range")))?;
            let s = match &cfg.augment {
                Some(a) => augment(s, a, &mut worker.augment_rng)?,
                None => s.clone(),
            };
            pairs.push(s.as_batch()?);
        }
        match (&cfg.regime, worker.accountant.as_mut()) {
            (Some(regime), Some(acct)) => {
                let out = dp_sgd_step(
                    model,
                    &worker.params,
                    &pairs,
                    regime,
                    cfg.federated_budget,
                    &mut worker.optimizer,
                    acct,
                    &mut worker.noise_rng,
                )
                .map_err(|e| match e {
                    Error::BudgetExceeded {
                        step,
                        epsilon_next,
                        epsilon_spent,
                        budget,
                        ..
                    } => Error::BudgetExceeded {
                        worker: Some(worker.id),
                        round: Some(round),
                        step,
                        epsilon_next,
                        epsilon_spent,
                        budget,
                    },
                    other => other,
                })?;
                worker.params = out.params;
                losses.push(out.loss);
            }
            _ => {
                let (xs, ys): (Vec<Tensor>, Vec<Tensor>) = pairs.into_iter().unzip();
                let (loss, grad) = loss_and_grad(model, &worker.params, &Tensor::concat(&xs, 0)?, &Tensor::concat(&ys, 0)?)?;
                let mut flat = worker.params.flatten();
                worker.optimizer.step(&mut flat, &grad);
                worker.params = worker.params.unflatten(&flat)?;
                losses.push(loss);
            }
        }
        batches.push(idx);
    }
    let delta: Vec<f64> = worker
        .params
        .flatten()
        .iter()
        .zip(global.flatten())
        .map(|(p, g)| p - g)
        .collect();
    Ok(LocalOutcome {
        message: UpdateMessage {
            worker_id: worker.id,
            round,
            payload: global.unflatten(&delta)?,
            n_samples: worker.shard.len(),
        },
        loss: losses.iter().sum::<f64>() / losses.len() as f64,
        batches,
    })
}

/// Per-image Dice of thresholded predictions.
pub fn evaluate_dice(model: &Model, params: &ParamSet, samples: &[PhantomSample]) -> Result<Vec<f64>> {
    let _g = no_grad();
    let chunks: Vec<&[PhantomSample]> = samples.chunks(16).collect();
    let per_chunk = chunks
        .par_iter()
        .map(|chunk| -> Result<Vec<f64>> {
            let pairs = chunk.iter().map(PhantomSample::as_batch).collect::<Result<Vec<_>>>()?;
            let (xs, ys): (Vec<Tensor>, Vec<Tensor>) = pairs.into_iter().unzip();
            let pred = predict_mask(&model.forward(params, &Tensor::concat(&xs, 0)?)?);
            let n = pred.shape()[0];
            let hw = pred.numel() / n;
            (0..n)
                .map(|i| {
                    let p = Tensor::new(pred.data()[i * hw..(i + 1) * hw].to_vec(), &[hw])?;
                    dice_score(&p, &ys[i].with_shape(&[hw])?)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub worker_id: usize,
    /// Empty for a worker whose round was cut short by the budget.
    pub loss: Option<f64>,
    pub dice_val: Option<f64>,
    pub epsilon: Option<f64>,
    pub aborted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    Completed,
    BudgetExhausted {
        worker: usize,
        round: usize,
        /// 1-based index of the local step that would have exceeded the budget.
        step: u64,
        epsilon_next: f64,
        /// ε of that worker after its last completed round.
        epsilon_spent: f64,
        budget: f64,
    },
}

#[derive(Clone, Debug)]
pub struct FederationRun {
    /// Global parameters after the last completed round.
    pub params: ParamSet,
    pub metrics: Vec<RoundMetrics>,
    /// `epsilon[w][r]`: worker `w`'s ε after completed round `r` (DP only).
    pub epsilon: Vec<Vec<f64>>,
    pub stop: StopReason,
    pub rounds_completed: usize,
    /// Patient ids per worker.
    pub shards: Vec<Vec<u32>>,
    pub captures: Vec<GradientUpdate>,
    /// Final worker states, including accountants.
    pub workers: Vec<WorkerState>,
}

impl FederationRun {
    pub fn capture_update(&self, round: usize, worker_id: usize) -> Result<&GradientUpdate> {
        if round >= self.rounds_completed || worker_id >= self.shards.len() {
            return Err(invalid(format!(
                "no update for round {round}, worker {worker_id} ({} rounds, {} workers)",
                self.rounds_completed,
                self.shards.len()
            )));
        }
        self.captures
            .iter()
            .find(|c| c.round == round && c.worker_id == worker_id)
            .ok_or_else(|| invalid(format!("round {round}, worker {worker_id} was not recorded")))
    }
}

/// Server loop: broadcast, local training on every worker (concurrently),
/// ordered aggregation, update. Stops early when any worker's next step
/// would exceed its privacy budget; that round is discarded.
pub fn run_federation(
    model: &Model,
    init: &ParamSet,
    cfg: &FederationConfig,
    train: &[PhantomSample],
    val: &[PhantomSample],
) -> Result<FederationRun> {
    run_federation_with(model, init, cfg, train, val, &mut |_| {})
}

/// [`run_federation`] calling `on_round(rounds_completed)` after every
/// applied round.
pub fn run_federation_with(
    model: &Model,
    init: &ParamSet,
    cfg: &FederationConfig,
    train: &[PhantomSample],
    val: &[PhantomSample],
    on_round: &mut dyn FnMut(usize),
) -> Result<FederationRun> {
    cfg.validate()?;
    model.check_params(init)?;
    let patients: Vec<u32> = train.iter().map(|s| s.patient_id).collect();
    let shards = partition_by_patient(&patients, cfg.n_workers, cfg.seed)?;
    let mut workers = shards
        .iter()
        .enumerate()
        .map(|(w, ids)| {
            let idx = (0..train.len())
                .filter(|&i| ids.binary_search(&train[i].patient_id).is_ok())
                .collect();
            WorkerState::new(w, idx, init.clone(), cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut global = init.clone();
    let mut metrics = Vec::new();
    let mut epsilon = vec![Vec::new(); cfg.n_workers];
    let mut captures = Vec::new();
    let mut stop = StopReason::Completed;
    let mut rounds_completed = 0;

    for round in 0..cfg.rounds {
        let mut next = workers.clone();
        let results: Vec<Result<LocalOutcome>> = next
            .par_iter_mut()
            .map(|w| local_train(w, model, &global, train, cfg, round))
            .collect();

        let mut outcomes = Vec::with_capacity(results.len());
        let mut exhausted = Vec::new();
        for r in results {
            match r {
                Ok(o) => outcomes.push(o),
                Err(Error::BudgetExceeded {
                    worker: Some(w),
                    step,
                    epsilon_next,
                    budget,
                    ..
                }) => exhausted.push((w, step, epsilon_next, budget)),
                Err(e) => return Err(e),
            }
        }
        if let Some(&(worker, step, epsilon_next, budget)) = exhausted.first() {
            for &(w, ..) in &exhausted {
                let spent = spent_epsilon(&workers[w], cfg)?;
                metrics.push(RoundMetrics {
                    round,
                    worker_id: w,
                    loss: None,
                    dice_val: None,
                    epsilon: spent,
                    aborted: true,
                });
            }
            stop = StopReason::BudgetExhausted {
                worker,
                round,
                step,
                epsilon_next,
                epsilon_spent: spent_epsilon(&workers[worker], cfg)?.unwrap_or(0.0),
                budget,
            };
            break;
        }

        let messages: Vec<UpdateMessage> = outcomes.iter().map(|o| o.message.clone()).collect();
        let delta = aggregate(&messages, cfg.weighted)?;
        for o in &outcomes {
            if cfg.record.contains(&(round, o.message.worker_id)) {
                captures.push(GradientUpdate {
                    round,
                    worker_id: o.message.worker_id,
                    payload: o.message.payload.clone(),
                    global: global.clone(),
                    lr: cfg.optimizer.lr,
                    steps: cfg.sync_every,
                    optimizer: cfg.optimizer.kind,
                    n_samples: o.message.n_samples,
                    batches: o.batches.clone(),
                });
            }
        }
        let updated: Vec<f64> = global.flatten().iter().zip(delta.flatten()).map(|(g, d)| g + d).collect();
        global = global.unflatten(&updated)?;
        workers = next;
        rounds_completed = round + 1;

        let evaluate = cfg.eval_every > 0 && (rounds_completed % cfg.eval_every == 0 || rounds_completed == cfg.rounds);
        let dice_val = if evaluate && !val.is_empty() {
            let d = evaluate_dice(model, &global, val)?;
            Some(d.iter().sum::<f64>() / d.len() as f64)
        } else {
            None
        };
        for (w, o) in workers.iter().zip(&outcomes) {
            let eps = spent_epsilon(w, cfg)?;
            if let Some(e) = eps {
                epsilon[w.id].push(e);
            }
            metrics.push(RoundMetrics {
                round,
                worker_id: w.id,
                loss: Some(o.loss),
                dice_val,
                epsilon: eps,
                aborted: false,
            });
        }
        on_round(rounds_completed);
    }

    Ok(FederationRun {
        params: global,
        metrics,
        epsilon,
        stop,
        rounds_completed,
        shards,
        captures,
        workers,
    })
}

fn spent_epsilon(w: &WorkerState, cfg: &FederationConfig) -> Result<Option<f64>> {
    match (&w.accountant, &cfg.regime) {
        (Some(a), Some(r)) => Ok(Some(to_epsilon(a, r.delta)?.0)),
        _ => Ok(None),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `round,worker_id,loss,dice_val,epsilon,aborted`; absent values are empty.
pub fn write_metrics_csv<W: std::io::Write>(out: W, metrics: &[RoundMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "worker_id", "loss", "dice_val", "epsilon", "aborted"])?;
    for m in metrics {
        w.write_record([
            m.round.to_string(),
            m.worker_id.to_string(),
            opt(m.loss),
            opt(m.dice_val),
            opt(m.epsilon),
            m.aborted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
