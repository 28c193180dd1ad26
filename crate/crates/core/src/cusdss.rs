//! Correlated uniform slot distribution with subset selection: each
//! candidate slot is kept or rejected by a Bernoulli coin toss, and only the
//! kept subset (the product intent) generates query words. Rejected slots
//! are modelled through dummy negated slots, so every product category is a
//! distribution over `2|M|` outcomes. Training and inference both run block
//! Gibbs updates over (category, assignments); the selected subset is always
//! derived from the assignments.

use crate::corpus::{CandidateSlotSet, Corpus, SlotId, TermId};
use crate::dist::{
    argmax, sample_log_index, CategoryMixture, CountTable, RandomSource, SlotEmissions,
};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy)]
pub struct CusdssParams {
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub num_categories: usize,
}

/// How the selection prior scores rejected candidates, which the source
/// material leaves ambiguous: complement of the negated-slot probability,
/// or the negated-slot probability itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RejectionTerm {
    #[default]
    OneMinusNegated,
    Negated,
}

#[derive(Debug, Clone)]
pub struct CusdssModel {
    pub params: CusdssParams,
    pub slot_word: CountTable,
    pub category_counts: Vec<u64>,
    /// K x 2|M|: column m counts selections of slot m, column m + |M|
    /// rejections.
    pub category_slot_ext: CountTable,
    pub categories: Vec<usize>,
    pub assignments: Vec<Vec<SlotId>>,
}

impl CusdssModel {
    pub fn num_slots(&self) -> usize {
        self.slot_word.rows()
    }

    pub fn emissions(&self) -> SlotEmissions {
        SlotEmissions::from_counts(self.params.delta, &self.slot_word)
    }

    /// Category prior and per-category distributions over the extended slot
    /// set.
    pub fn mixture(&self) -> CategoryMixture {
        CategoryMixture::from_counts(
            self.params.alpha,
            &self.category_counts,
            self.params.beta,
            &self.category_slot_ext,
        )
    }

    pub fn audit(&self, corpus: &Corpus) -> bool {
        let k = self.params.num_categories;
        let m_total = self.num_slots();
        let mut counts = vec![0u64; k];
        let mut ext = CountTable::new(k, 2 * m_total);
        let mut words = CountTable::new(m_total, self.slot_word.cols());
        for ((record, &z), assignment) in corpus
            .records
            .iter()
            .zip(&self.categories)
            .zip(&self.assignments)
        {
            counts[z] += 1;
            for (&term, &slot) in record.query.terms.iter().zip(assignment) {
                words.inc(slot as usize, term as usize);
            }
            for &m in record.candidates.slots() {
                let used = assignment.contains(&m);
                ext.inc(z, column(m, used, m_total));
            }
        }
        counts == self.category_counts && ext == self.category_slot_ext && words == self.slot_word
    }
}

#[inline]
fn column(slot: SlotId, selected: bool, num_slots: usize) -> usize {
    if selected {
        slot as usize
    } else {
        slot as usize + num_slots
    }
}

/// Multiset of slots used by a record's assignment.
#[derive(Debug, Clone, Default)]
pub struct SlotUsage {
    entries: Vec<(SlotId, u32)>,
}

impl SlotUsage {
    pub fn from_assignment(assignment: &[SlotId]) -> Self {
        let mut usage = Self::default();
        for &m in assignment {
            usage.add(m);
        }
        usage
    }

    pub fn count(&self, slot: SlotId) -> u32 {
        self.entries
            .iter()
            .find(|(m, _)| *m == slot)
            .map_or(0, |(_, n)| *n)
    }

    pub fn contains(&self, slot: SlotId) -> bool {
        self.count(slot) > 0
    }

    /// Number of distinct slots in use.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn add(&mut self, slot: SlotId) {
        if let Some(entry) = self.entries.iter_mut().find(|(m, _)| *m == slot) {
            entry.1 += 1;
        } else {
            self.entries.push((slot, 1));
        }
    }

    pub fn remove(&mut self, slot: SlotId) {
        let idx = self
            .entries
            .iter()
            .position(|(m, _)| *m == slot)
            .expect("removing a slot that is not in use");
        self.entries[idx].1 -= 1;
        if self.entries[idx].1 == 0 {
            self.entries.swap_remove(idx);
        }
    }
}

/// Log-weights for resampling one position given the category. `usage_minus`
/// holds the slots used by the other positions. `current` is the position's
/// present assignment when the record's contributions are still inside the
/// global tables (training); `None` for frozen-table inference.
#[allow(clippy::too_many_arguments)]
pub fn position_log_weights(
    delta: f64,
    beta: f64,
    gamma: f64,
    slot_word_excl: &CountTable,
    category_slot_ext: &CountTable,
    category: usize,
    cands: &[SlotId],
    usage_minus: &SlotUsage,
    current: Option<SlotId>,
    term: TermId,
) -> Vec<f64> {
    let num_slots = slot_word_excl.rows();
    let vocab = slot_word_excl.cols() as f64;
    let distinct_minus = usage_minus.distinct();
    let ln_gamma_odds = (gamma / (1.0 - gamma)).ln();
    cands
        .iter()
        .map(|&m| {
            let in_a_minus = usage_minus.contains(m);
            let a_size = distinct_minus + usize::from(!in_a_minus);
            let mut lw = -(a_size as f64).ln();
            if !in_a_minus {
                lw += ln_gamma_odds;
                let sel = category_slot_ext.get(category, column(m, true, num_slots));
                let neg = category_slot_ext.get(category, column(m, false, num_slots));
                // exclude this record's own contribution for the flipping
                // candidate: it currently sits in the selected column iff
                // this position is its only user
                let (sel_adj, neg_adj) = match current {
                    Some(cur) if cur == m => (1, 0),
                    Some(_) => (0, 1),
                    None => (0, 0),
                };
                lw += (beta + (sel - sel_adj) as f64).ln();
                lw -= (beta + (neg - neg_adj) as f64).ln();
            }
            let row = m as usize;
            lw += (delta + slot_word_excl.get(row, term as usize) as f64).ln();
            lw -= (delta * vocab + slot_word_excl.row_total(row) as f64).ln();
            lw
        })
        .collect()
}

/// Normalized form of [`position_log_weights`].
#[allow(clippy::too_many_arguments)]
pub fn position_conditional(
    delta: f64,
    beta: f64,
    gamma: f64,
    slot_word_excl: &CountTable,
    category_slot_ext: &CountTable,
    category: usize,
    cands: &[SlotId],
    usage_minus: &SlotUsage,
    current: Option<SlotId>,
    term: TermId,
) -> Vec<f64> {
    let lw = position_log_weights(
        delta,
        beta,
        gamma,
        slot_word_excl,
        category_slot_ext,
        category,
        cands,
        usage_minus,
        current,
        term,
    );
    crate::dist::normalize_log(&lw).expect("position weights are positive")
}

/// Log-weights for resampling a record's category. Counts must exclude the
/// record; `usage` decides which extended column each candidate occupies.
pub fn category_log_weights(
    alpha: f64,
    beta: f64,
    category_counts_excl: &[u64],
    category_slot_ext_excl: &CountTable,
    cands: &[SlotId],
    usage: &SlotUsage,
) -> Vec<f64> {
    let num_slots = category_slot_ext_excl.cols() / 2;
    let base_prior = beta * category_slot_ext_excl.cols() as f64;
    category_counts_excl
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let mut lw = (alpha + u as f64).ln();
            for &m in cands {
                let col = column(m, usage.contains(m), num_slots);
                lw += (beta + category_slot_ext_excl.get(k, col) as f64).ln();
            }
            let base = base_prior + category_slot_ext_excl.row_total(k) as f64;
            for i in 0..cands.len() {
                lw -= (base + i as f64).ln();
            }
            lw
        })
        .collect()
}

/// Stepwise block-Gibbs trainer, exposed so callers can observe the chain
/// between updates.
pub struct Sampler<'a> {
    corpus: &'a Corpus,
    params: CusdssParams,
    rng: RandomSource,
    slot_word: CountTable,
    category_counts: Vec<u64>,
    category_slot_ext: CountTable,
    categories: Vec<usize>,
    assignments: Vec<Vec<SlotId>>,
}

impl<'a> Sampler<'a> {
    /// Initializes assignments uniformly from each candidate set and
    /// categories uniformly over `K`; builds all count tables.
    pub fn new(corpus: &'a Corpus, params: CusdssParams, rng: &RandomSource) -> Self {
        assert!(params.num_categories >= 1);
        assert!(
            params.gamma > 0.0 && params.gamma < 1.0,
            "gamma must lie strictly between 0 and 1"
        );
        assert!(!corpus.records.is_empty(), "cannot train on an empty corpus");
        let k = params.num_categories;
        let num_slots = corpus.registry.num_slots();
        let mut train_rng = rng.child(0);

        let mut slot_word = CountTable::new(num_slots, corpus.registry.num_terms());
        let mut category_counts = vec![0u64; k];
        let mut category_slot_ext = CountTable::new(k, 2 * num_slots);
        let mut categories = Vec::with_capacity(corpus.records.len());
        let mut assignments = Vec::with_capacity(corpus.records.len());
        for record in &corpus.records {
            let cands = record.candidates.slots();
            let mut assignment = Vec::with_capacity(record.query.terms.len());
            for &term in &record.query.terms {
                let slot = cands[train_rng.below(cands.len())];
                slot_word.inc(slot as usize, term as usize);
                assignment.push(slot);
            }
            let z = train_rng.below(k);
            category_counts[z] += 1;
            for &m in cands {
                let used = assignment.contains(&m);
                category_slot_ext.inc(z, column(m, used, num_slots));
            }
            categories.push(z);
            assignments.push(assignment);
        }
        Self {
            corpus,
            params,
            rng: train_rng,
            slot_word,
            category_counts,
            category_slot_ext,
            categories,
            assignments,
        }
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    pub fn assignments(&self) -> &[Vec<SlotId>] {
        &self.assignments
    }

    /// One block update of one record: resample the category, then every
    /// position, maintaining all counts incrementally.
    pub fn update_record(&mut self, record_idx: usize) {
        let record = &self.corpus.records[record_idx];
        let cands = record.candidates.slots();
        let num_slots = self.corpus.registry.num_slots();
        let mut usage = SlotUsage::from_assignment(&self.assignments[record_idx]);

        // category step: remove the record, sample, re-add
        let z_old = self.categories[record_idx];
        self.category_counts[z_old] -= 1;
        for &m in cands {
            self.category_slot_ext
                .dec(z_old, column(m, usage.contains(m), num_slots));
        }
        let lw = category_log_weights(
            self.params.alpha,
            self.params.beta,
            &self.category_counts,
            &self.category_slot_ext,
            cands,
            &usage,
        );
        let z = sample_log_index(&lw, &mut self.rng).expect("category weights are positive");
        self.category_counts[z] += 1;
        for &m in cands {
            self.category_slot_ext
                .inc(z, column(m, usage.contains(m), num_slots));
        }
        self.categories[record_idx] = z;

        // position steps
        for i in 0..record.query.terms.len() {
            let term = record.query.terms[i];
            let y_old = self.assignments[record_idx][i];
            self.slot_word.dec(y_old as usize, term as usize);
            usage.remove(y_old);
            let lw = position_log_weights(
                self.params.delta,
                self.params.beta,
                self.params.gamma,
                &self.slot_word,
                &self.category_slot_ext,
                z,
                cands,
                &usage,
                Some(y_old),
                term,
            );
            let choice = sample_log_index(&lw, &mut self.rng).expect("position weights are positive");
            let y_new = cands[choice];
            self.slot_word.inc(y_new as usize, term as usize);
            usage.add(y_new);
            if y_new != y_old {
                if !usage.contains(y_old) {
                    self.category_slot_ext
                        .dec(z, column(y_old, true, num_slots));
                    self.category_slot_ext
                        .inc(z, column(y_old, false, num_slots));
                }
                if usage.count(y_new) == 1 {
                    self.category_slot_ext
                        .dec(z, column(y_new, false, num_slots));
                    self.category_slot_ext
                        .inc(z, column(y_new, true, num_slots));
                }
                self.assignments[record_idx][i] = y_new;
            }
        }
    }

    pub fn sweep(&mut self) {
        for r in 0..self.corpus.records.len() {
            self.update_record(r);
        }
    }

    pub fn into_model(self) -> CusdssModel {
        CusdssModel {
            params: self.params,
            slot_word: self.slot_word,
            category_counts: self.category_counts,
            category_slot_ext: self.category_slot_ext,
            categories: self.categories,
            assignments: self.assignments,
        }
    }
}

pub fn train(
    corpus: &Corpus,
    params: CusdssParams,
    iterations: u32,
    rng: &RandomSource,
) -> CusdssModel {
    assert!(iterations >= 1);
    let mut sampler = Sampler::new(corpus, params, rng);
    for _ in 0..iterations {
        sampler.sweep();
    }
    sampler.into_model()
}

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub slots: Vec<SlotId>,
    pub category: usize,
}

/// Iterative block-Gibbs inference for one query against frozen global
/// counts. Out-of-vocabulary positions are pinned to the miscellaneous slot.
/// `iterations` below 1 is treated as 1.
pub fn infer(
    model: &CusdssModel,
    terms: &[Option<TermId>],
    cands: &CandidateSlotSet,
    iterations: u32,
    rng: &mut RandomSource,
    misc_slot: SlotId,
) -> InferOutcome {
    let iterations = iterations.max(1);
    let k = model.params.num_categories;
    let slots = cands.slots();

    let mut assignment: Vec<SlotId> = terms
        .iter()
        .map(|term| match term {
            None => misc_slot,
            Some(_) => slots[rng.below(slots.len())],
        })
        .collect();
    let mut category = rng.below(k);
    let mut usage = SlotUsage::from_assignment(&assignment);

    for _ in 0..iterations {
        let lw = category_log_weights(
            model.params.alpha,
            model.params.beta,
            &model.category_counts,
            &model.category_slot_ext,
            slots,
            &usage,
        );
        category = sample_log_index(&lw, rng).expect("category weights are positive");
        for (i, term) in terms.iter().enumerate() {
            let Some(v) = term else {
                continue;
            };
            let y_old = assignment[i];
            usage.remove(y_old);
            let lw = position_log_weights(
                model.params.delta,
                model.params.beta,
                model.params.gamma,
                &model.slot_word,
                &model.category_slot_ext,
                category,
                slots,
                &usage,
                None,
                *v,
            );
            let choice = sample_log_index(&lw, rng).expect("position weights are positive");
            let y_new = slots[choice];
            usage.add(y_new);
            assignment[i] = y_new;
        }
    }

    InferOutcome {
        slots: assignment,
        category,
    }
}

/// Candidate-set selection: infer a tagging per set, score it by the joint
/// probability of the set with its inferred category (weighted by `mu`) plus
/// the tagging's emission likelihood. Each set gets its own child stream so
/// the outcome does not depend on evaluation order. `emissions` and
/// `mixture` must be materialized from the model's counts.
#[allow(clippy::too_many_arguments)]
pub fn select(
    model: &CusdssModel,
    emissions: &SlotEmissions,
    mixture: &CategoryMixture,
    terms: &[Option<TermId>],
    sets: &[CandidateSlotSet],
    mu: f64,
    infer_iterations: u32,
    rng: &RandomSource,
    misc_slot: SlotId,
    rejection: RejectionTerm,
) -> Result<(usize, Vec<SlotId>)> {
    if sets.is_empty() {
        return Err(CoreError::NoCandidateSets);
    }
    let num_slots = model.num_slots();

    let mut scores = Vec::with_capacity(sets.len());
    let mut taggings = Vec::with_capacity(sets.len());
    for (j, set) in sets.iter().enumerate() {
        let mut set_rng = rng.child(j as u64);
        let outcome = infer(model, terms, set, infer_iterations, &mut set_rng, misc_slot);
        let z = outcome.category;
        let mut prior = mixture.ln_class_prob(z);
        for &m in set.slots() {
            let selected = outcome.slots.contains(&m);
            if selected {
                prior += mixture.ln_slot_prob(z, column(m, true, num_slots));
            } else {
                let neg = mixture.slot_prob(z, column(m, false, num_slots));
                prior += match rejection {
                    RejectionTerm::OneMinusNegated => (1.0 - neg).ln(),
                    RejectionTerm::Negated => neg.ln(),
                };
            }
        }
        let tagging: f64 = terms
            .iter()
            .zip(&outcome.slots)
            .filter_map(|(term, &y)| term.map(|v| emissions.ln_prob(y, v)))
            .sum();
        scores.push(mu * prior + tagging);
        taggings.push(outcome.slots);
    }
    let best = argmax(&scores);
    Ok((best, taggings.swap_remove(best)))
}
