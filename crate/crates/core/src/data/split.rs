use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use privseg_tensor::rng::{stream_id, CounterRng};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.63, 0.07, 0.30];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split `{other}`"))),
        }
    }
}

/// Patient ids per split, each list sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitManifest {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
    pub fractions: [f64; 3],
}

impl SplitManifest {
    pub fn split_of(&self, patient: u32) -> Option<Split> {
        if self.train.binary_search(&patient).is_ok() {
            Some(Split::Train)
        } else if self.val.binary_search(&patient).is_ok() {
            Some(Split::Val)
        } else if self.test.binary_search(&patient).is_ok() {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Shuffles the distinct patient ids with `seed`, then takes
/// `round(f_val·n)` for validation, `round(f_test·n)` for test and leaves the
/// rest to training.
pub fn split_dataset(patient_ids: &[u32], fractions: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions must be nonnegative and sum to 1, got {fractions:?}")));
    }
    let mut ids: Vec<u32> = patient_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let n = ids.len();
    let n_val = (fractions[1] * n as f64).round() as usize;
    let n_test = (fractions[2] * n as f64).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(invalid(format!(
            "{n} patients cannot be split into nonempty train/val/test with fractions {fractions:?}"
        )));
    }
    CounterRng::new(seed, stream_id(&[0x5917])).shuffle(&mut ids);
    let mut val = ids[..n_val].to_vec();
    let mut test = ids[n_val..n_val + n_test].to_vec();
    let mut train = ids[n_val + n_test..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitManifest {
        train,
        val,
        test,
        fractions,
    })
}
