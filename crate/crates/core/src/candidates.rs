//! Candidate slot-set enumeration for tagging with an unobserved candidate
//! set: per-key pools of the top-t most probable slots for each query word,
//! expanded into the cross product of per-key choices.

use crate::corpus::{CandidateSlotSet, SlotId, SlotRegistry, TermId};
use crate::dist::SlotEmissions;
use crate::error::{CoreError, Result};

/// Per-key slot pools, indexed by key id. The miscellaneous key's pool stays
/// empty; the miscellaneous slot is appended to every enumerated set anyway.
#[derive(Debug, Clone)]
pub struct KeyPools {
    pub pools: Vec<Vec<SlotId>>,
}

/// For each in-vocabulary query word and each slot-key, takes the `t` slots
/// of that key with the highest emission probability for the word (ties to
/// the lowest slot id) and pools them per key.
pub fn top_t_pools(
    emissions: &SlotEmissions,
    registry: &SlotRegistry,
    terms: &[Option<TermId>],
    t: usize,
) -> KeyPools {
    assert!(t >= 1);
    let mut pools: Vec<Vec<SlotId>> = vec![Vec::new(); registry.num_keys()];
    for key in 0..registry.num_keys() as u32 {
        if key == registry.misc_key() {
            continue;
        }
        let slots = registry.slots_of_key(key);
        if slots.is_empty() {
            continue;
        }
        let pool = &mut pools[key as usize];
        for term in terms.iter().flatten() {
            let mut ranked: Vec<SlotId> = slots.to_vec();
            // stable sort keeps ascending ids within equal probabilities
            ranked.sort_by(|&a, &b| {
                emissions
                    .prob(b, *term)
                    .partial_cmp(&emissions.prob(a, *term))
                    .expect("emission probabilities are comparable")
            });
            for &m in ranked.iter().take(t) {
                if !pool.contains(&m) {
                    pool.push(m);
                }
            }
        }
        pool.sort_unstable();
    }
    KeyPools { pools }
}

/// Cartesian product over keys of (absent + pooled slots), each combination
/// completed with the miscellaneous slot. Sets appear in a deterministic
/// order: keys ascending with the absent option first, the last key varying
/// fastest. The count `prod(|pool| + 1)` is checked against `max_sets`
/// before any set is built.
pub fn enumerate_sets(
    registry: &SlotRegistry,
    pools: &KeyPools,
    max_sets: usize,
) -> Result<Vec<CandidateSlotSet>> {
    let mut count: u128 = 1;
    for pool in &pools.pools {
        count = count.saturating_mul(pool.len() as u128 + 1);
    }
    if count > max_sets as u128 {
        return Err(CoreError::TooManySets {
            count,
            max: max_sets,
        });
    }

    // options per key: absent first, then pooled slots ascending
    let options: Vec<&[SlotId]> = pools.pools.iter().map(Vec::as_slice).collect();
    let mut sets = Vec::with_capacity(count as usize);
    let mut indices = vec![0usize; options.len()];
    loop {
        let chosen: Vec<SlotId> = indices
            .iter()
            .zip(&options)
            .filter_map(|(&i, opts)| if i == 0 { None } else { Some(opts[i - 1]) })
            .collect();
        sets.push(
            CandidateSlotSet::new(chosen, registry)
                .expect("pools contain at most one slot choice per key"),
        );
        // odometer: advance the last key first
        let mut pos = options.len();
        loop {
            if pos == 0 {
                return Ok(sets);
            }
            pos -= 1;
            if indices[pos] < options[pos].len() {
                indices[pos] += 1;
                break;
            }
            indices[pos] = 0;
        }
    }
}
