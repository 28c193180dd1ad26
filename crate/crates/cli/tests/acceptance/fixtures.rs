//! Corpus builders for the acceptance checks.

use slotfill_core::corpus::{
    CandidateSlotSet, Corpus, EngagementRecord, Query, SlotId, SlotRegistry,
};
use slotfill_core::RandomSource;

/// Random toy corpus for the conditional-distribution oracles: at most
/// `max_records` records, a tiny vocabulary and at most one slot per key.
pub struct ToyCorpus {
    pub corpus: Corpus,
}

pub fn random_toy_corpus(rng: &mut RandomSource, max_records: usize) -> ToyCorpus {
    let n_real_slots = 1 + rng.below(3); // |M| <= 4 with miscellaneous
    let n_terms = 1 + rng.below(5);
    let mut registry = SlotRegistry::new();
    for s in 0..n_real_slots {
        let key = registry.intern_key(&format!("k{s}"));
        registry.intern_slot(key, &format!("v{s}"));
    }
    for t in 0..n_terms {
        registry.intern_term(&format!("w{t}"));
    }
    let n_records = 1 + rng.below(max_records);
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        // random subset of the real slots (distinct keys by construction)
        let mut slots = Vec::new();
        for s in 0..n_real_slots {
            if rng.next_f64() < 0.6 {
                slots.push(s as SlotId + 1);
            }
        }
        let candidates = CandidateSlotSet::new(slots, &registry).unwrap();
        let len = 1 + rng.below(4);
        let terms = (0..len).map(|_| rng.below(n_terms) as u32).collect();
        records.push(EngagementRecord {
            query: Query { terms },
            candidates,
        });
    }
    ToyCorpus {
        corpus: Corpus { registry, records },
    }
}

/// Draws a valid assignment configuration for a toy corpus.
pub fn random_assignments(corpus: &Corpus, rng: &mut RandomSource) -> Vec<Vec<SlotId>> {
    corpus
        .records
        .iter()
        .map(|r| {
            let cands = r.candidates.slots();
            (0..r.query.terms.len())
                .map(|_| cands[rng.below(cands.len())])
                .collect()
        })
        .collect()
}

/// Two product cliques sharing an ambiguous word that only clique
/// membership can key correctly.
///
/// Clique 0 pairs slot a0 (key k0) with b0 (key k1); clique 1 pairs a1 with
/// b1. The word `amb` is emitted by a0 in clique 0 and, twice as often, by
/// b1 in clique 1. Queries `[a0-word, amb]` therefore get mis-keyed by pure
/// emission scoring, while the clique structure resolves them. Ubiquitous
/// generic words keep the miscellaneous row heavy so specific words drain
/// to their own slots during training.
pub struct TwoCliqueData {
    pub corpus: Corpus,
    /// (query tokens, gold key names)
    pub test_queries: Vec<(Vec<String>, Vec<String>)>,
}

pub fn two_clique_corpus(base_records: usize, amb_records: usize, seed: u64) -> TwoCliqueData {
    let mut rng = RandomSource::from_seed(seed);
    let mut registry = SlotRegistry::new();
    let k0 = registry.intern_key("k0");
    let k1 = registry.intern_key("k1");
    let a0 = registry.intern_slot(k0, "a0");
    let a1 = registry.intern_slot(k0, "a1");
    let b0 = registry.intern_slot(k1, "b0");
    let b1 = registry.intern_slot(k1, "b1");

    let words_of = |name: &str, n: usize| -> Vec<String> {
        (0..n).map(|i| format!("{name}w{i}")).collect()
    };
    // lean supports: the slots' rows must stay small next to the
    // miscellaneous ballast or the shared word drains into miscellaneous
    let supports: Vec<(SlotId, Vec<String>)> = vec![
        (a0, words_of("a0", 2)),
        (a1, words_of("a1", 2)),
        (b0, words_of("b0", 2)),
        (b1, words_of("b1", 2)),
    ];
    for (_, words) in &supports {
        for w in words {
            registry.intern_term(w);
        }
    }
    let generic = words_of("g", 5);
    for w in &generic {
        registry.intern_term(w);
    }
    let amb = registry.intern_term("amb");

    let support = |slot: SlotId| -> &Vec<String> {
        &supports.iter().find(|(s, _)| *s == slot).unwrap().1
    };
    let mut records = Vec::new();
    let mut push_record = |registry: &SlotRegistry, terms: Vec<u32>, slots: Vec<SlotId>| {
        let candidates = CandidateSlotSet::new(slots, registry).unwrap();
        records.push(EngagementRecord {
            query: Query { terms },
            candidates,
        });
    };
    let pick = |words: &Vec<String>, rng: &mut RandomSource| -> u32 {
        registry.term_id(&words[rng.below(words.len())]).unwrap()
    };

    for _ in 0..base_records {
        let wa = pick(support(a0), &mut rng);
        let wb = pick(support(b0), &mut rng);
        let g0 = pick(&generic, &mut rng);
        let g1 = pick(&generic, &mut rng);
        push_record(&registry, vec![wa, wb, g0, g1], vec![a0, b0]);
        let wa = pick(support(a1), &mut rng);
        let wb = pick(support(b1), &mut rng);
        let g0 = pick(&generic, &mut rng);
        let g1 = pick(&generic, &mut rng);
        push_record(&registry, vec![wa, wb, g0, g1], vec![a1, b1]);
    }
    // ambiguous-word records: the word's slot identity comes from the
    // candidate set alone; clique 1 emits it twice as often
    for _ in 0..amb_records {
        let g = pick(&generic, &mut rng);
        push_record(&registry, vec![amb, g], vec![a0]);
        for _ in 0..2 {
            let g = pick(&generic, &mut rng);
            push_record(&registry, vec![amb, g], vec![b1]);
        }
    }

    // test queries: the ambiguous clique-0 pattern plus easy fillers
    let mut test_queries = Vec::new();
    for i in 0..2 {
        for _ in 0..3 {
            test_queries.push((
                vec![format!("a0w{i}"), "amb".to_string()],
                vec!["k0".to_string(), "k0".to_string()],
            ));
        }
        test_queries.push((
            vec![format!("a0w{i}"), format!("b0w{i}"), format!("gw{i}")],
            vec![
                "k0".to_string(),
                "k1".to_string(),
                "miscellaneous".to_string(),
            ],
        ));
        test_queries.push((
            vec![format!("a1w{i}"), format!("b1w{i}"), "amb".to_string()],
            vec!["k0".to_string(), "k1".to_string(), "k1".to_string()],
        ));
    }

    TwoCliqueData {
        corpus: Corpus { registry, records },
        test_queries,
    }
}

/// Two product families where only the shoe family's queries mention the
/// size key, next to a pile of low-frequency junk words (gold key
/// miscellaneous) and a noise slot carried by every candidate set that
/// never emits.
///
/// Size words co-occur with their own rotating size value, so they anchor
/// cleanly. The junk words have no anchor: plain Gibbs training scatters
/// them, and whatever leaks into the small size rows gets the size key
/// overpredicted at inference, costing precision. Subset selection prices
/// slot use through the per-category selected/rejected counts, which
/// systematically keeps unanchored words on the always-selected
/// miscellaneous slot and the rare key's precision intact.
pub struct RareKeyData {
    pub corpus: Corpus,
    pub test_queries: Vec<(Vec<String>, Vec<String>)>,
}

pub fn rare_key_corpus(n_records: usize, n_test: usize, seed: u64) -> RareKeyData {
    let mut rng = RandomSource::from_seed(seed);
    let mut registry = SlotRegistry::new();
    let pt_key = registry.intern_key("product-type");
    let brand_key = registry.intern_key("brand");
    let size_key = registry.intern_key("size");
    let noise_key = registry.intern_key("noise");

    // pt/brand/size values 0..1 belong to the shoe family, 2..3 to grocery
    let pt_slots: Vec<SlotId> = (0..4)
        .map(|v| registry.intern_slot(pt_key, &format!("pt{v}")))
        .collect();
    let brand_slots: Vec<SlotId> = (0..4)
        .map(|v| registry.intern_slot(brand_key, &format!("br{v}")))
        .collect();
    let size_slots: Vec<SlotId> = (0..4)
        .map(|v| registry.intern_slot(size_key, &format!("sz{v}")))
        .collect();
    let noise_slot = registry.intern_slot(noise_key, "noise");

    let mut word_ids = |prefix: &str, values: usize, per_value: usize| -> Vec<Vec<u32>> {
        (0..values)
            .map(|v| {
                (0..per_value)
                    .map(|i| registry.intern_term(&format!("{prefix}{v}w{i}")))
                    .collect()
            })
            .collect()
    };
    let pt_words = word_ids("pt", 4, 3);
    let brand_words = word_ids("br", 4, 2);
    // shoe sizes sz0/sz1 have real words; grocery sizes never emit
    let size_words = word_ids("sz", 2, 2);
    let generic_words: Vec<u32> = (0..6)
        .map(|i| registry.intern_term(&format!("gw{i}")))
        .collect();
    // low-value filler tokens (typos, stray modifiers) with no stable slot
    let junk_words: Vec<u32> = (0..24)
        .map(|i| registry.intern_term(&format!("jw{i}")))
        .collect();

    let draw = |rng: &mut RandomSource| -> (Vec<u32>, Vec<String>, Vec<SlotId>) {
        let family = rng.below(2); // 0 = shoes, 1 = grocery
        let pt_v = family * 2 + rng.below(2);
        let brand_v = family * 2 + rng.below(2);
        let size_v = family * 2 + rng.below(2);
        let cands = vec![
            pt_slots[pt_v],
            brand_slots[brand_v],
            size_slots[size_v],
            noise_slot,
        ];
        let mut terms = Vec::new();
        let mut gold = Vec::new();
        let n_pt = 1 + rng.below(2);
        for _ in 0..n_pt {
            terms.push(pt_words[pt_v][rng.below(3)]);
            gold.push("product-type".to_string());
        }
        if rng.next_f64() < 0.6 {
            terms.push(brand_words[brand_v][rng.below(2)]);
            gold.push("brand".to_string());
        }
        terms.push(generic_words[rng.below(6)]);
        gold.push("miscellaneous".to_string());
        if rng.next_f64() < 0.6 {
            terms.push(generic_words[rng.below(6)]);
            gold.push("miscellaneous".to_string());
        }
        if rng.next_f64() < 0.55 {
            terms.push(junk_words[rng.below(24)]);
            gold.push("miscellaneous".to_string());
        }
        if family == 0 && rng.next_f64() < 0.5 {
            terms.push(size_words[size_v][rng.below(2)]);
            gold.push("size".to_string());
        }
        (terms, gold, cands)
    };

    let mut records = Vec::new();
    for _ in 0..n_records {
        let (terms, _, cands) = draw(&mut rng);
        let candidates = CandidateSlotSet::new(cands, &registry).unwrap();
        records.push(EngagementRecord {
            query: Query { terms },
            candidates,
        });
    }
    let mut test_queries = Vec::new();
    for _ in 0..n_test {
        let (terms, gold, _) = draw(&mut rng);
        let tokens = terms
            .iter()
            .map(|&t| registry.term(t).to_string())
            .collect();
        test_queries.push((tokens, gold));
    }

    RareKeyData {
        corpus: Corpus { registry, records },
        test_queries,
    }
}
