use crate::data::AugmentParams;
use crate::dp::PrivacyRegime;
use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;

/// Settings for one simulated federation. Training a single site locally is
/// the case `n_workers = 1, sync_every = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    pub n_workers: usize,
    /// Local optimizer steps per round.
    pub sync_every: usize,
    pub rounds: usize,
    /// Weight each worker's update by its sample count.
    pub weighted: bool,
    pub regime: Option<PrivacyRegime>,
    /// Compare ε against the regime's federated budget instead of the local one.
    pub federated_budget: bool,
    pub optimizer: OptimizerConfig,
    /// Samples per local step; 0 means the whole shard.
    pub batch_size: usize,
    pub seed: u64,
    pub augment: Option<AugmentParams>,
    /// Validation Dice every this many rounds (and after the last one); 0 disables.
    pub eval_every: usize,
    /// `(round, worker)` pairs whose updates are kept for inspection.
    pub record: Vec<(usize, usize)>,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            n_workers: 3,
            sync_every: 1,
            rounds: 100,
            weighted: true,
            regime: None,
            federated_budget: true,
            optimizer: OptimizerConfig::sgd(0.1),
            batch_size: 0,
            seed: 0,
            augment: None,
            eval_every: 0,
            record: Vec::new(),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 {
            return Err(Error::InvalidConfig("n_workers must be at least 1".into()));
        }
        if self.sync_every == 0 {
            return Err(Error::InvalidConfig("sync_every must be at least 1".into()));
        }
        self.optimizer.validate()?;
        if let Some(r) = &self.regime {
            r.validate()?;
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}
