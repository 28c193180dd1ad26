//! Correlated uniform slot distribution: candidate slot-sets are drawn from
//! latent product categories (a mixture of unigrams over slots). Word
//! tagging is identical to the plain sampler when the candidate set is
//! observed; the categories pay off when selecting an unobserved set.

use crate::corpus::{CandidateSlotSet, Corpus, SlotId, TermId};
use crate::dist::{
    argmax, normalize_log, sample_index, CategoryMixture, CountTable, RandomSource,
    SlotEmissions,
};
use crate::error::{CoreError, Result};
use crate::usd;

#[derive(Debug, Clone, Copy)]
pub struct CusdParams {
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub num_categories: usize,
}

#[derive(Debug, Clone)]
pub struct CusdModel {
    pub params: CusdParams,
    pub slot_word: CountTable,
    pub assignments: Vec<Vec<SlotId>>,
    /// U(k): number of records currently assigned to category k.
    pub category_counts: Vec<u64>,
    /// R(k, m): occurrences of slot m in candidate sets of category-k records.
    pub category_slot: CountTable,
    pub categories: Vec<usize>,
}

impl CusdModel {
    pub fn emissions(&self) -> SlotEmissions {
        SlotEmissions::from_counts(self.params.delta, &self.slot_word)
    }

    pub fn mixture(&self) -> CategoryMixture {
        CategoryMixture::from_counts(
            self.params.alpha,
            &self.category_counts,
            self.params.beta,
            &self.category_slot,
        )
    }

    pub fn audit(&self, corpus: &Corpus) -> bool {
        let k = self.params.num_categories;
        let mut counts = vec![0u64; k];
        let mut slots = CountTable::new(k, self.slot_word.rows());
        for (record, &z) in corpus.records.iter().zip(&self.categories) {
            counts[z] += 1;
            for &m in record.candidates.slots() {
                slots.inc(z, m as usize);
            }
        }
        counts == self.category_counts
            && slots == self.category_slot
            && self.category_counts.iter().sum::<u64>() as usize == corpus.records.len()
    }
}

/// Gibbs conditional for a record's category: prior count factor times the
/// collapsed probability of drawing each candidate slot from the category.
/// `category_counts` and `category_slot` must exclude the record itself.
pub fn category_conditional(
    alpha: f64,
    beta: f64,
    category_counts_excl: &[u64],
    category_slot_excl: &CountTable,
    cands: &[SlotId],
) -> Vec<f64> {
    let num_slots = category_slot_excl.cols() as f64;
    let log_weights: Vec<f64> = category_counts_excl
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let mut lw = (alpha + u as f64).ln();
            for &m in cands {
                lw += (beta + category_slot_excl.get(k, m as usize) as f64).ln();
            }
            let base = beta * num_slots + category_slot_excl.row_total(k) as f64;
            for i in 0..cands.len() {
                lw -= (base + i as f64).ln();
            }
            lw
        })
        .collect();
    normalize_log(&log_weights).expect("category weights are positive")
}

pub fn train(
    corpus: &Corpus,
    params: CusdParams,
    iterations: u32,
    rng: &RandomSource,
) -> CusdModel {
    assert!(iterations >= 1);
    assert!(params.num_categories >= 1);
    assert!(!corpus.records.is_empty(), "cannot train on an empty corpus");
    let k = params.num_categories;

    // word tagging consumes the same stream as the plain sampler; category
    // draws come from their own stream
    let mut word_rng = rng.child(usd::WORD_STREAM);
    let mut cat_rng = rng.child(usd::CATEGORY_STREAM);

    let seed_model = usd::init(corpus, params.delta, &mut word_rng);
    let mut slot_word = seed_model.slot_word;
    let mut assignments = seed_model.assignments;

    let mut categories = Vec::with_capacity(corpus.records.len());
    let mut category_counts = vec![0u64; k];
    let mut category_slot = CountTable::new(k, corpus.registry.num_slots());
    for record in &corpus.records {
        let z = cat_rng.below(k);
        categories.push(z);
        category_counts[z] += 1;
        for &m in record.candidates.slots() {
            category_slot.inc(z, m as usize);
        }
    }

    for _ in 0..iterations {
        usd::sweep(
            corpus,
            params.delta,
            &mut slot_word,
            &mut assignments,
            &mut word_rng,
        );
        for (r, record) in corpus.records.iter().enumerate() {
            let z_old = categories[r];
            category_counts[z_old] -= 1;
            for &m in record.candidates.slots() {
                category_slot.dec(z_old, m as usize);
            }
            let weights = category_conditional(
                params.alpha,
                params.beta,
                &category_counts,
                &category_slot,
                record.candidates.slots(),
            );
            let z_new =
                sample_index(&weights, &mut cat_rng).expect("category weights are positive");
            category_counts[z_new] += 1;
            for &m in record.candidates.slots() {
                category_slot.inc(z_new, m as usize);
            }
            categories[r] = z_new;
        }
    }

    CusdModel {
        params,
        slot_word,
        assignments,
        category_counts,
        category_slot,
        categories,
    }
}

/// Maximum a posteriori category for a candidate set; ties go to the lowest
/// category index.
pub fn map_category(mixture: &CategoryMixture, cands: &[SlotId]) -> usize {
    let scores: Vec<f64> = (0..mixture.num_categories())
        .map(|k| {
            mixture.ln_class_prob(k)
                + cands
                    .iter()
                    .map(|&m| mixture.ln_slot_prob(k, m as usize))
                    .sum::<f64>()
        })
        .collect();
    argmax(&scores)
}

/// Candidate-set selection: the joint probability of the set and its MAP
/// category acts as a co-occurrence prior weighted by `mu`, added to the
/// best per-word tagging likelihood.
pub fn select(
    emissions: &SlotEmissions,
    mixture: &CategoryMixture,
    terms: &[Option<TermId>],
    sets: &[CandidateSlotSet],
    mu: f64,
    misc_slot: SlotId,
) -> Result<(usize, Vec<SlotId>)> {
    if sets.is_empty() {
        return Err(CoreError::NoCandidateSets);
    }
    let scores: Vec<f64> = sets
        .iter()
        .map(|set| {
            let z = map_category(mixture, set.slots());
            let prior = mixture.ln_class_prob(z)
                + set
                    .slots()
                    .iter()
                    .map(|&m| mixture.ln_slot_prob(z, m as usize))
                    .sum::<f64>();
            mu * prior + usd::tagging_ln_likelihood(emissions, terms, set)
        })
        .collect();
    let best = argmax(&scores);
    Ok((
        best,
        usd::annotate(emissions, terms, &sets[best], misc_slot),
    ))
}
