use crate::error::{Error, Result};

pub const ORACLE_MAX_ITEMS: usize = 16;

/// Minimum number of packs for `lengths`, by dynamic programming over item
/// subsets. For each subset it keeps the lexicographically smallest
/// `(packs used, load of the last pack)`, which is exact for bin packing.
pub fn pack_optimal_oracle(lengths: &[u32], capacity: u32) -> Result<usize> {
    if lengths.len() > ORACLE_MAX_ITEMS {
        return Err(Error::InstanceTooLarge {
            items: lengths.len(),
            max: ORACLE_MAX_ITEMS,
        });
    }
    if let Some(&l) = lengths.iter().find(|&&l| l == 0 || l > capacity) {
        return Err(Error::Config(format!(
            "item length {l} must lie in 1..={capacity}"
        )));
    }
    if lengths.is_empty() {
        return Ok(0);
    }
    let n = lengths.len();
    let cap = u64::from(capacity);
    let mut best = vec![(usize::MAX, u64::MAX); 1 << n];
    best[0] = (1, 0);
    for mask in 0..(1usize << n) {
        let (packs, load) = best[mask];
        if packs == usize::MAX {
            continue;
        }
        for (i, &l) in lengths.iter().enumerate() {
            if mask & (1 << i) != 0 {
                continue;
            }
            let l = u64::from(l);
            let next = if load + l <= cap {
                (packs, load + l)
            } else {
                (packs + 1, l)
            };
            let slot = &mut best[mask | (1 << i)];
            if next < *slot {
                *slot = next;
            }
        }
    }
    Ok(best[(1 << n) - 1].0)
}
