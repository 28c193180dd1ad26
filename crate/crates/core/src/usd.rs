//! Uniform slot distribution: every candidate slot is a priori equally
//! likely for every word. Collapsed Gibbs sampling over the per-word slot
//! assignments; inference is a per-word argmax over the candidate set.

use crate::corpus::{CandidateSlotSet, Corpus, SlotId, TermId};
use crate::dist::{argmax, sample_index, CountTable, RandomSource, SlotEmissions};
use crate::error::{CoreError, Result};

/// Stream indices shared with the category models so that their word-tagging
/// chain consumes the same draws as the plain sampler under one seed.
pub(crate) const WORD_STREAM: u64 = 0;
pub(crate) const CATEGORY_STREAM: u64 = 1;

#[derive(Debug, Clone)]
pub struct UsdModel {
    pub delta: f64,
    /// T(m, v): count of word v currently tagged with slot m.
    pub slot_word: CountTable,
    /// Current slot assignment per record, parallel to the corpus records.
    pub assignments: Vec<Vec<SlotId>>,
}

impl UsdModel {
    pub fn emissions(&self) -> SlotEmissions {
        SlotEmissions::from_counts(self.delta, &self.slot_word)
    }

    /// Checks that the count table equals the histogram of the current
    /// assignments.
    pub fn audit(&self, corpus: &Corpus) -> bool {
        let mut expected = CountTable::new(self.slot_word.rows(), self.slot_word.cols());
        for (record, assignment) in corpus.records.iter().zip(&self.assignments) {
            for (&term, &slot) in record.query.terms.iter().zip(assignment) {
                expected.inc(slot as usize, term as usize);
            }
        }
        expected == self.slot_word && self.slot_word.audit()
    }
}

/// Draws every initial assignment uniformly from its candidate set.
pub fn init(corpus: &Corpus, delta: f64, rng: &mut RandomSource) -> UsdModel {
    let mut slot_word = CountTable::new(corpus.registry.num_slots(), corpus.registry.num_terms());
    let mut assignments = Vec::with_capacity(corpus.records.len());
    for record in &corpus.records {
        let cands = record.candidates.slots();
        let mut assignment = Vec::with_capacity(record.query.terms.len());
        for &term in &record.query.terms {
            let slot = cands[rng.below(cands.len())];
            slot_word.inc(slot as usize, term as usize);
            assignment.push(slot);
        }
        assignments.push(assignment);
    }
    UsdModel {
        delta,
        slot_word,
        assignments,
    }
}

/// Collapsed Gibbs conditional for one position: the posterior-mean emission
/// probability of the word under each candidate slot, computed from counts
/// that exclude the position itself, normalized over the candidate set.
pub fn conditional(
    delta: f64,
    slot_word_excl: &CountTable,
    cands: &[SlotId],
    term: TermId,
) -> Vec<f64> {
    let vocab = slot_word_excl.cols() as f64;
    let mut weights: Vec<f64> = cands
        .iter()
        .map(|&m| {
            let row = m as usize;
            (delta + slot_word_excl.get(row, term as usize) as f64)
                / (delta * vocab + slot_word_excl.row_total(row) as f64)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// One full sweep visiting every position in corpus order.
pub(crate) fn sweep(
    corpus: &Corpus,
    delta: f64,
    slot_word: &mut CountTable,
    assignments: &mut [Vec<SlotId>],
    rng: &mut RandomSource,
) {
    for (record, assignment) in corpus.records.iter().zip(assignments.iter_mut()) {
        let cands = record.candidates.slots();
        for (i, &term) in record.query.terms.iter().enumerate() {
            let old = assignment[i];
            slot_word.dec(old as usize, term as usize);
            let weights = conditional(delta, slot_word, cands, term);
            let choice = sample_index(&weights, rng).expect("conditional weights are positive");
            let new = cands[choice];
            slot_word.inc(new as usize, term as usize);
            assignment[i] = new;
        }
    }
}

pub fn train(corpus: &Corpus, delta: f64, iterations: u32, rng: &RandomSource) -> UsdModel {
    assert!(iterations >= 1);
    assert!(!corpus.records.is_empty(), "cannot train on an empty corpus");
    let mut word_rng = rng.child(WORD_STREAM);
    let mut model = init(corpus, delta, &mut word_rng);
    for _ in 0..iterations {
        sweep(
            corpus,
            delta,
            &mut model.slot_word,
            &mut model.assignments,
            &mut word_rng,
        );
    }
    model
}

/// Tags each word with the candidate slot maximizing its emission
/// probability; ties go to the lowest slot id. Out-of-vocabulary words map
/// to the miscellaneous slot.
pub fn annotate(
    emissions: &SlotEmissions,
    terms: &[Option<TermId>],
    cands: &CandidateSlotSet,
    misc_slot: SlotId,
) -> Vec<SlotId> {
    terms
        .iter()
        .map(|term| match term {
            None => misc_slot,
            Some(v) => {
                let probs: Vec<f64> = cands
                    .slots()
                    .iter()
                    .map(|&m| emissions.prob(m, *v))
                    .collect();
                cands.slots()[argmax(&probs)]
            }
        })
        .collect()
}

/// Log-likelihood of the best per-word tagging under one candidate set.
/// Out-of-vocabulary positions contribute zero for every set.
pub fn tagging_ln_likelihood(
    emissions: &SlotEmissions,
    terms: &[Option<TermId>],
    cands: &CandidateSlotSet,
) -> f64 {
    terms
        .iter()
        .filter_map(|term| term.as_ref())
        .map(|&v| {
            cands
                .slots()
                .iter()
                .map(|&m| emissions.ln_prob(m, v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Candidate-set selection for the unobserved case: picks the set whose best
/// tagging has the highest likelihood, ties to the lowest set index.
pub fn select(
    emissions: &SlotEmissions,
    terms: &[Option<TermId>],
    sets: &[CandidateSlotSet],
    misc_slot: SlotId,
) -> Result<(usize, Vec<SlotId>)> {
    if sets.is_empty() {
        return Err(CoreError::NoCandidateSets);
    }
    let scores: Vec<f64> = sets
        .iter()
        .map(|c| tagging_ln_likelihood(emissions, terms, c))
        .collect();
    let best = argmax(&scores);
    Ok((best, annotate(emissions, terms, &sets[best], misc_slot)))
}
