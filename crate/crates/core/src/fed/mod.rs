//! In-process federated averaging.
//!
//! Workers hold patient-disjoint shards, train locally for `sync_every`
//! steps per round and send parameter deltas; the server averages them in
//! worker order and applies the result. Workers run concurrently but every
//! reduction has a fixed order, so results do not depend on scheduling.

mod config;
mod message;
mod partition;
mod run;

pub use config::FederationConfig;
pub use message::{aggregate, GradientUpdate, UpdateMessage};
pub use partition::partition_by_patient;
pub use run::{
    evaluate_dice, local_train, run_federation, run_federation_with, write_metrics_csv, FederationRun, LocalOutcome, RoundMetrics,
    StopReason, WorkerState,
};
