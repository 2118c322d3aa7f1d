use std::collections::BTreeSet;

use privseg_tensor::rng::{stream_id, CounterRng};

use crate::error::{invalid, Result};

/// Shuffles the distinct patient ids and deals them out round-robin, so
/// shard sizes differ by at most one. Each shard is returned sorted.
pub fn partition_by_patient(patient_ids: &[u32], n_workers: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    let mut ids: Vec<u32> = patient_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if n_workers == 0 || ids.len() < n_workers {
        return Err(invalid(format!("cannot split {} patients across {n_workers} workers", ids.len())));
    }
    CounterRng::new(seed, stream_id(&[0x5A4D])).shuffle(&mut ids);
    let mut shards = vec![Vec::new(); n_workers];
    for (i, id) in ids.into_iter().enumerate() {
        shards[i % n_workers].push(id);
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}
