use privseg_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sample {sample}: non-finite gradient element")]
    NonFiniteGradient { sample: usize },

    /// Taking step `step` (1-based) would push epsilon to `epsilon_next`,
    /// past the budget. That step was not applied; `epsilon_spent` is the
    /// loss after the `step - 1` steps that were.
    #[error("privacy budget exhausted at step {step}{}: epsilon would reach {epsilon_next:.4} > budget {budget} (spent {epsilon_spent:.4})", worker.map(|w| format!(" (worker {w})")).unwrap_or_default())]
    BudgetExceeded {
        worker: Option<usize>,
        round: Option<usize>,
        step: u64,
        epsilon_next: f64,
        epsilon_spent: f64,
        budget: f64,
    },

    #[error("captured gradient has zero norm")]
    ZeroNormGradient,

    #[error("no bias gradient exceeds the recovery threshold")]
    Unrecoverable,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
