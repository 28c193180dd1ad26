//! Planted-model corpus generator: samples category, selection, slot and
//! word variables from the same generative structure the models assume, so
//! recovery can be checked against known ground truth. Emits the engagement,
//! annotation, catalog and judgment files plus the planted parameters.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSlotSet, Corpus, EngagementRecord, Query, SlotId, SlotRegistry};
use crate::dist::{sample_index, RandomSource};
use crate::error::{CoreError, Result};

const KEY_NAMES: [&str; 6] = ["product-type", "brand", "gender", "color", "age", "size"];
/// Extra slot present in every candidate set that never generates words.
const NOISE_KEY: &str = "noise";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_keys: usize,
    pub values_per_key: usize,
    pub vocab_size: usize,
    pub n_categories: usize,
    pub queries: usize,
    pub min_query_len: usize,
    pub max_query_len: usize,
    /// Selection probability for each real slot of a candidate set.
    pub gamma: f64,
    /// Dirichlet concentration of the planted emission distributions; lower
    /// values give peakier slots.
    pub emission_concentration: f64,
    /// Give every slot a private block of the vocabulary.
    #[serde(default)]
    pub disjoint_support: bool,
    #[serde(default)]
    pub noise_slot: bool,
    pub seed: u64,
}

impl SynthConfig {
    fn n_real_slots(&self) -> usize {
        self.n_keys * self.values_per_key
    }

    /// Emitting slots: the real ones plus miscellaneous.
    fn n_emitting(&self) -> usize {
        self.n_real_slots() + 1
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_keys < 1 || self.values_per_key < 1 {
            problems.push("need at least one key and one value per key");
        }
        if self.n_categories < 1 || self.queries < 1 {
            problems.push("need at least one category and one query");
        }
        if self.min_query_len < 1 || self.min_query_len > self.max_query_len {
            problems.push("query length range is empty");
        }
        if self.gamma.is_nan() || self.gamma <= 0.0 || self.gamma >= 1.0 {
            problems.push("gamma must lie strictly between 0 and 1");
        }
        if self.emission_concentration.is_nan() || self.emission_concentration <= 0.0 {
            problems.push("emission concentration must be positive");
        }
        if self.disjoint_support && self.vocab_size < self.n_emitting() {
            problems.push("disjoint support needs vocab_size >= number of emitting slots");
        }
        if self.vocab_size < 1 {
            problems.push("vocabulary must be non-empty");
        }
        if let Some(problem) = problems.first() {
            return Err(CoreError::InvalidParameter(problem.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlantedParams {
    pub phi: Vec<f64>,
    /// Per category, per slot id; each key's block sums to one.
    pub chi: Vec<Vec<f64>>,
    /// Per slot id over the vocabulary; all-zero rows never emit.
    pub psi: Vec<Vec<f64>>,
    pub seed: u64,
    pub config: SynthConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub product_id: String,
    pub slots: Vec<(String, String)>,
}

#[derive(Debug)]
pub struct SynthData {
    pub corpus: Corpus,
    /// Deduplicated (query text, per-word gold keys).
    pub annotations: Vec<(String, Vec<String>)>,
    pub catalog: Vec<CatalogEntry>,
    /// (query text, product id, purchases), aggregated.
    pub judgments: Vec<(String, String, u64)>,
    pub planted: PlantedParams,
}

fn dirichlet(rng: &mut RandomSource, dim: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng).max(1e-300)).collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

fn key_name(idx: usize) -> String {
    KEY_NAMES
        .get(idx)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("key{idx}"))
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = RandomSource::from_seed(config.seed);
    let n_real = config.n_real_slots();
    let vocab: Vec<String> = (0..config.vocab_size).map(|i| format!("w{i:03}")).collect();

    // planted parameters, all drawn before any query
    let phi = dirichlet(&mut rng, config.n_categories, 1.0);
    // chi: per category, per key, a distribution over that key's values
    let chi_by_key: Vec<Vec<Vec<f64>>> = (0..config.n_categories)
        .map(|_| {
            (0..config.n_keys)
                .map(|_| dirichlet(&mut rng, config.values_per_key, 1.0))
                .collect()
        })
        .collect();

    // emission supports: real slots at ids 1..=n_real, miscellaneous at 0
    let support_of = |slot: SlotId| -> std::ops::Range<usize> {
        if config.disjoint_support {
            let block = config.vocab_size / config.n_emitting();
            if slot == 0 {
                // miscellaneous takes the last block plus any remainder
                n_real * block..config.vocab_size
            } else {
                let p = slot as usize - 1;
                p * block..(p + 1) * block
            }
        } else {
            0..config.vocab_size
        }
    };
    // psi rows indexed by slot id; drawn for real slots first, then misc
    let mut psi = vec![vec![0.0; config.vocab_size]; n_real + 1];
    for slot in (1..=n_real as SlotId).chain([0]) {
        let support = support_of(slot);
        let probs = dirichlet(&mut rng, support.len(), config.emission_concentration);
        for (offset, p) in probs.into_iter().enumerate() {
            psi[slot as usize][support.start + offset] = p;
        }
    }

    // registry: values name their slot and carry a few support words so the
    // catalog text overlaps the query vocabulary
    let mut registry = SlotRegistry::new();
    for key_idx in 0..config.n_keys {
        let key = registry.intern_key(&key_name(key_idx));
        for value_idx in 0..config.values_per_key {
            let slot_id = (key_idx * config.values_per_key + value_idx + 1) as SlotId;
            let support = support_of(slot_id);
            let words: Vec<&str> = support
                .take(3)
                .map(|w| vocab[w].as_str())
                .collect();
            let value = format!("{}-v{} {}", key_name(key_idx), value_idx, words.join(" "));
            let interned = registry.intern_slot(key, value.trim());
            debug_assert_eq!(interned, slot_id);
        }
    }
    let noise_slot = if config.noise_slot {
        let key = registry.intern_key(NOISE_KEY);
        Some(registry.intern_slot(key, NOISE_KEY))
    } else {
        None
    };
    for word in &vocab {
        registry.intern_term(word);
    }
    if let Some(noise) = noise_slot {
        psi.push(vec![0.0; config.vocab_size]);
        debug_assert_eq!(psi.len() - 1, noise as usize);
    }

    let slot_of_value = |key_idx: usize, value_idx: usize| -> SlotId {
        (key_idx * config.values_per_key + value_idx + 1) as SlotId
    };

    let mut records = Vec::with_capacity(config.queries);
    let mut annotations: Vec<(String, Vec<String>)> = Vec::new();
    let mut seen_queries: HashMap<String, ()> = HashMap::new();
    let mut catalog: Vec<CatalogEntry> = Vec::new();
    let mut catalog_index: HashMap<Vec<SlotId>, usize> = HashMap::new();
    let mut judgments: Vec<(String, String, u64)> = Vec::new();
    let mut judgment_index: HashMap<(String, String), usize> = HashMap::new();

    for _ in 0..config.queries {
        let z = sample_index(&phi, &mut rng).expect("phi is a distribution");
        // one slot per key, drawn from the category
        let mut real_slots = Vec::with_capacity(config.n_keys);
        for (key_idx, chi_key) in chi_by_key[z].iter().enumerate() {
            let value = sample_index(chi_key, &mut rng).expect("chi is a distribution");
            real_slots.push(slot_of_value(key_idx, value));
        }
        // Bernoulli selection per real slot; miscellaneous is always part of
        // the intent, the noise slot never is
        let intent: Vec<SlotId> = std::iter::once(0)
            .chain(
                real_slots
                    .iter()
                    .copied()
                    .filter(|_| rng.next_f64() < config.gamma),
            )
            .collect();

        let len =
            config.min_query_len + rng.below(config.max_query_len - config.min_query_len + 1);
        let mut terms = Vec::with_capacity(len);
        let mut gold = Vec::with_capacity(len);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let y = intent[rng.below(intent.len())];
            let v = sample_index(&psi[y as usize], &mut rng).expect("psi row is a distribution");
            terms.push(v as u32);
            words.push(vocab[v].as_str());
            gold.push(registry.key(registry.slot_key(y)).to_string());
        }
        let query_text = words.join(" ");

        let mut cand_ids = real_slots.clone();
        if let Some(noise) = noise_slot {
            cand_ids.push(noise);
        }
        let candidates = CandidateSlotSet::new(cand_ids.clone(), &registry)?;

        // catalog product for this candidate set
        let mut product_key: Vec<SlotId> = cand_ids.clone();
        product_key.sort_unstable();
        let product_idx = *catalog_index.entry(product_key.clone()).or_insert_with(|| {
            let id = format!("p{:04}", catalog.len());
            catalog.push(CatalogEntry {
                product_id: id,
                slots: product_key
                    .iter()
                    .map(|&s| {
                        let def = registry.slot(s);
                        (registry.key(def.key).to_string(), def.value.clone())
                    })
                    .collect(),
            });
            catalog.len() - 1
        });
        let product_id = catalog[product_idx].product_id.clone();

        let mut purchases = 1u64;
        while rng.next_f64() < 0.4 && purchases < 6 {
            purchases += 1;
        }
        match judgment_index.entry((query_text.clone(), product_id.clone())) {
            std::collections::hash_map::Entry::Occupied(e) => {
                judgments[*e.get()].2 += purchases;
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(judgments.len());
                judgments.push((query_text.clone(), product_id, purchases));
            }
        }

        if seen_queries.insert(query_text.clone(), ()).is_none() {
            annotations.push((query_text, gold));
        }
        records.push(EngagementRecord {
            query: Query { terms },
            candidates,
        });
    }

    // flatten chi over slot ids for the planted-parameter dump
    let num_slots = registry.num_slots();
    let chi: Vec<Vec<f64>> = (0..config.n_categories)
        .map(|k| {
            let mut row = vec![0.0; num_slots];
            for key_idx in 0..config.n_keys {
                for value_idx in 0..config.values_per_key {
                    row[slot_of_value(key_idx, value_idx) as usize] =
                        chi_by_key[k][key_idx][value_idx];
                }
            }
            row
        })
        .collect();

    Ok(SynthData {
        corpus: Corpus { registry, records },
        annotations,
        catalog,
        judgments,
        planted: PlantedParams {
            phi,
            chi,
            psi,
            seed: config.seed,
            config: config.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFiles {
    pub engagement: String,
    pub annotations: String,
    pub catalog: String,
    pub judgments: String,
    pub planted: String,
}

impl SynthData {
    pub fn render(&self) -> RenderedFiles {
        let mut engagement = Vec::new();
        crate::corpus::write_engagement(&self.corpus, &mut engagement)
            .expect("writing to memory cannot fail");

        let mut annotations = String::new();
        for (query, keys) in &self.annotations {
            let line = serde_json::json!({ "query": query, "keys": keys });
            annotations.push_str(&line.to_string());
            annotations.push('\n');
        }

        let mut catalog = String::new();
        for entry in &self.catalog {
            let slots: Vec<serde_json::Value> = entry
                .slots
                .iter()
                .map(|(k, v)| serde_json::json!({ "key": k, "value": v }))
                .collect();
            let line = serde_json::json!({ "product_id": entry.product_id, "slots": slots });
            catalog.push_str(&line.to_string());
            catalog.push('\n');
        }

        let mut judgments = String::new();
        for (query, product, purchases) in &self.judgments {
            let line = serde_json::json!({
                "query": query,
                "product_id": product,
                "purchases": purchases,
            });
            judgments.push_str(&line.to_string());
            judgments.push('\n');
        }

        let planted =
            serde_json::to_string_pretty(&self.planted).expect("planted parameters serialize");

        RenderedFiles {
            engagement: String::from_utf8(engagement).expect("engagement lines are utf-8"),
            annotations,
            catalog,
            judgments,
            planted,
        }
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let files = self.render();
        fs::write(dir.join("engagement.jsonl"), files.engagement)?;
        fs::write(dir.join("annotations.jsonl"), files.annotations)?;
        fs::write(dir.join("catalog.jsonl"), files.catalog)?;
        fs::write(dir.join("judgments.jsonl"), files.judgments)?;
        fs::write(dir.join("planted-params.json"), files.planted)?;
        Ok(())
    }
}
