use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::nn::{OptimizerKind, ParamSet};

/// What a worker sends to the server after a round: its parameter delta.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateMessage {
    pub worker_id: usize,
    pub round: usize,
    pub payload: ParamSet,
    pub n_samples: usize,
}

/// Mean (or sample-weighted mean) of the payloads, accumulated in ascending
/// `worker_id` order regardless of the order given.
pub fn aggregate(updates: &[UpdateMessage], weighted: bool) -> Result<ParamSet> {
    let mut order: Vec<&UpdateMessage> = updates.iter().collect();
    order.sort_by_key(|u| u.worker_id);
    let first = order.first().ok_or_else(|| invalid("aggregate: no updates"))?;
    for u in &order[1..] {
        first.payload.check_layout(&u.payload, &format!("update from worker {}", u.worker_id))?;
    }
    let total: usize = order.iter().map(|u| u.n_samples).sum();
    if weighted && total == 0 {
        return Err(invalid("aggregate: weighted aggregation with zero samples"));
    }
    let mut acc = vec![0.0; first.payload.numel()];
    for u in &order {
        let w = if weighted {
            u.n_samples as f64 / total as f64
        } else {
            1.0 / order.len() as f64
        };
        for (a, v) in acc.iter_mut().zip(u.payload.flatten()) {
            *a += w * v;
        }
    }
    first.payload.unflatten(&acc)
}

/// A recorded update together with everything an observer of the protocol
/// also knows: the global parameters it was computed from and the local
/// training settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientUpdate {
    pub round: usize,
    pub worker_id: usize,
    pub payload: ParamSet,
    pub global: ParamSet,
    pub lr: f64,
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub n_samples: usize,
    /// Training-set indices of the samples in each local batch. Kept for
    /// evaluating attacks; an attacker does not get to see this.
    pub batches: Vec<Vec<usize>>,
}

impl GradientUpdate {
    /// The payload as an averaged gradient, `delta / (−lr·steps)`. Exact for a
    /// single SGD step; for several steps it is the mean of the step gradients.
    pub fn gradient(&self) -> Result<ParamSet> {
        if self.optimizer != OptimizerKind::Sgd {
            return Err(invalid(format!("cannot recover a gradient from a {} update", self.optimizer)));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("cannot recover a gradient from an update with lr = 0"));
        }
        let scale = -1.0 / (self.lr * self.steps as f64);
        let flat: Vec<f64> = self.payload.flatten().into_iter().map(|v| v * scale).collect();
        self.payload.unflatten(&flat)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let batches = self
            .batches
            .iter()
            .map(|b| b.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join(";");
        let meta = BTreeMap::from([
            ("kind".to_string(), "gradient_update".to_string()),
            ("round".to_string(), self.round.to_string()),
            ("worker_id".to_string(), self.worker_id.to_string()),
            ("lr".to_string(), format!("{:?}", self.lr)),
            ("steps".to_string(), self.steps.to_string()),
            ("optimizer".to_string(), self.optimizer.to_string()),
            ("n_samples".to_string(), self.n_samples.to_string()),
            ("batches".to_string(), batches),
        ]);
        self.payload.prefixed("payload/").concat(&self.global.prefixed("global/"))?.save(path, &meta)
    }

    pub fn load(path: &Path) -> Result<GradientUpdate> {
        let (all, meta) = ParamSet::load(path)?;
        if meta.get("kind").map(String::as_str) != Some("gradient_update") {
            return Err(Error::Format(format!("{} is not a captured update", path.display())));
        }
        let field = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Format(format!("{}: missing `{k}`", path.display())))
        };
        let num = |k: &str| -> Result<usize> {
            field(k)?
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad `{k}`", path.display())))
        };
        let lr: f64 = field("lr")?
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad `lr`", path.display())))?;
        let batches = field("batches")?
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|b| {
                b.split(' ')
                    .map(|i| i.parse().map_err(|_| Error::Format(format!("{}: bad batch list", path.display()))))
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<_>>()?;
        Ok(GradientUpdate {
            round: num("round")?,
            worker_id: num("worker_id")?,
            payload: all.strip_prefix("payload/"),
            global: all.strip_prefix("global/"),
            lr,
            steps: num("steps")?,
            optimizer: field("optimizer")?.parse()?,
            n_samples: num("n_samples")?,
            batches,
        })
    }
}
