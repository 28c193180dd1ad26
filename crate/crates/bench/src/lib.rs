//! Shared fixtures for the benchmarks.

use slotfill_core::synthgen::{generate, SynthConfig, SynthData};

pub fn bench_corpus(queries: usize, seed: u64) -> SynthData {
    let config = SynthConfig {
        n_keys: 6,
        values_per_key: 2,
        vocab_size: 65,
        n_categories: 4,
        queries,
        min_query_len: 3,
        max_query_len: 6,
        gamma: 0.7,
        emission_concentration: 0.5,
        disjoint_support: true,
        noise_slot: false,
        seed,
    };
    generate(&config).expect("benchmark corpus generates")
}
