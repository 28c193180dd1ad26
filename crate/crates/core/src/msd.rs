//! Markovian slot distribution: slot sequences follow a first-order Markov
//! process. The transition distributions are not collapsed out; they are
//! re-estimated from transition counts once per sweep. Inference is Viterbi
//! decoding over the candidate slots.

use crate::corpus::{CandidateSlotSet, Corpus, SlotId, TermId};
use crate::dist::{
    argmax, sample_log_index, CountTable, RandomSource, SlotEmissions, SlotTransitions,
};
use crate::error::{CoreError, Result};
use crate::usd;

#[derive(Debug, Clone)]
pub struct MsdModel {
    pub delta: f64,
    pub zeta: f64,
    pub slot_word: CountTable,
    /// Transition counts, (|M|+1) x |M|; the extra row counts transitions
    /// out of the start state (one per record).
    pub transitions: CountTable,
    /// Materialized transition distributions, refreshed once per sweep.
    pub trans_probs: SlotTransitions,
    pub assignments: Vec<Vec<SlotId>>,
}

impl MsdModel {
    pub fn emissions(&self) -> SlotEmissions {
        SlotEmissions::from_counts(self.delta, &self.slot_word)
    }

    pub fn audit(&self, corpus: &Corpus) -> bool {
        let num_slots = self.slot_word.rows();
        let mut expected = CountTable::new(num_slots + 1, num_slots);
        for assignment in &self.assignments {
            let mut prev = num_slots;
            for &slot in assignment {
                expected.inc(prev, slot as usize);
                prev = slot as usize;
            }
        }
        expected == self.transitions
            && self.transitions.row_total(num_slots) as usize == corpus.records.len()
    }
}

/// Gibbs conditional for one position: transition factors into and out of
/// the position (the successor factor is omitted at the last position)
/// times the collapsed word factor.
pub fn conditional(
    delta: f64,
    slot_word_excl: &CountTable,
    trans: &SlotTransitions,
    cands: &[SlotId],
    term: TermId,
    prev_state: usize,
    next_slot: Option<SlotId>,
) -> Vec<f64> {
    let emission = usd::conditional(delta, slot_word_excl, cands, term);
    let mut weights: Vec<f64> = cands
        .iter()
        .zip(&emission)
        .map(|(&m, &p2)| {
            let incoming = trans.prob(prev_state, m);
            let outgoing = next_slot.map_or(1.0, |n| trans.prob(m as usize, n));
            incoming * outgoing * p2
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

fn transition_counts_from(assignments: &[Vec<SlotId>], num_slots: usize) -> CountTable {
    let mut counts = CountTable::new(num_slots + 1, num_slots);
    for assignment in assignments {
        let mut prev = num_slots;
        for &slot in assignment {
            counts.inc(prev, slot as usize);
            prev = slot as usize;
        }
    }
    counts
}

pub fn train(
    corpus: &Corpus,
    delta: f64,
    zeta: f64,
    iterations: u32,
    rng: &RandomSource,
) -> MsdModel {
    assert!(iterations >= 1);
    assert!(!corpus.records.is_empty(), "cannot train on an empty corpus");
    let num_slots = corpus.registry.num_slots();
    let start = num_slots;
    let mut word_rng = rng.child(usd::WORD_STREAM);
    let seed_model = usd::init(corpus, delta, &mut word_rng);
    let mut slot_word = seed_model.slot_word;
    let mut assignments = seed_model.assignments;
    let mut transitions = transition_counts_from(&assignments, num_slots);
    let mut trans_probs = SlotTransitions::from_counts(zeta, &transitions);

    for _ in 0..iterations {
        for (record, assignment) in corpus.records.iter().zip(assignments.iter_mut()) {
            let cands = record.candidates.slots();
            let len = record.query.terms.len();
            for (i, &term) in record.query.terms.iter().enumerate() {
                let old = assignment[i];
                let prev = if i == 0 { start } else { assignment[i - 1] as usize };
                let next = if i + 1 < len { Some(assignment[i + 1]) } else { None };
                slot_word.dec(old as usize, term as usize);
                transitions.dec(prev, old as usize);
                if let Some(n) = next {
                    transitions.dec(old as usize, n as usize);
                }
                let weights = conditional(
                    delta,
                    &slot_word,
                    &trans_probs,
                    cands,
                    term,
                    prev,
                    next,
                );
                let choice = sample_log_index(
                    &weights.iter().map(|w| w.ln()).collect::<Vec<_>>(),
                    &mut word_rng,
                )
                .expect("conditional weights are positive");
                let new = cands[choice];
                slot_word.inc(new as usize, term as usize);
                transitions.inc(prev, new as usize);
                if let Some(n) = next {
                    transitions.inc(new as usize, n as usize);
                }
                assignment[i] = new;
            }
        }
        trans_probs = SlotTransitions::from_counts(zeta, &transitions);
    }

    MsdModel {
        delta,
        zeta,
        slot_word,
        transitions,
        trans_probs,
        assignments,
    }
}

/// Viterbi decoding over the candidate slots. Transition rows are restricted
/// to the candidate set and renormalized. Returns the best path and its
/// log-score; score ties resolve to the lexicographically smallest slot-id
/// sequence. Out-of-vocabulary positions are pinned to the miscellaneous
/// slot with a unit emission factor.
pub fn viterbi(
    emissions: &SlotEmissions,
    trans: &SlotTransitions,
    terms: &[Option<TermId>],
    cands: &CandidateSlotSet,
    misc_slot: SlotId,
) -> (Vec<SlotId>, f64) {
    let states = cands.slots();
    let n = states.len();
    let misc_idx = states
        .iter()
        .position(|&m| m == misc_slot)
        .expect("candidate sets contain the miscellaneous slot");

    // restricted log-transition rows: from each state, and from start
    let from_state: Vec<Vec<f64>> = states
        .iter()
        .map(|&m| trans.restricted_ln(m as usize, states))
        .collect();
    let from_start = trans.restricted_ln(trans.start_index(), states);

    let allowed = |term: &Option<TermId>| -> Vec<usize> {
        match term {
            None => vec![misc_idx],
            Some(_) => (0..n).collect(),
        }
    };
    let emit = |term: &Option<TermId>, state: usize| -> f64 {
        match term {
            None => 0.0,
            Some(v) => emissions.ln_prob(states[state], *v),
        }
    };

    // per-state best (score, lexicographically smallest path)
    let mut layer: Vec<Option<(f64, Vec<SlotId>)>> = vec![None; n];
    for s in allowed(&terms[0]) {
        let mut score = from_start[s];
        score += emit(&terms[0], s);
        layer[s] = Some((score, vec![states[s]]));
    }
    for term in &terms[1..] {
        let mut next_layer: Vec<Option<(f64, Vec<SlotId>)>> = vec![None; n];
        for s in allowed(term) {
            let mut best: Option<(f64, Vec<SlotId>)> = None;
            for (p, entry) in layer.iter().enumerate() {
                let Some((prev_score, prev_path)) = entry else {
                    continue;
                };
                let mut score = *prev_score + from_state[p][s];
                score += emit(term, s);
                let replace = match &best {
                    None => true,
                    Some((best_score, best_path)) => {
                        score > *best_score
                            || (score == *best_score && prev_path < best_path)
                    }
                };
                if replace {
                    let mut path = prev_path.clone();
                    path.push(states[s]);
                    best = Some((score, path));
                }
            }
            next_layer[s] = best;
        }
        layer = next_layer;
    }

    let mut best: Option<(f64, Vec<SlotId>)> = None;
    for entry in layer.into_iter().flatten() {
        let replace = match &best {
            None => true,
            Some((score, path)) => entry.0 > *score || (entry.0 == *score && entry.1 < *path),
        };
        if replace {
            best = Some(entry);
        }
    }
    let (score, path) = best.expect("at least one state is reachable");
    (path, score)
}

/// Candidate-set selection: the per-path transition product (restricted to
/// the set) acts as a co-occurrence proxy weighted by `mu`, added to the
/// path's joint log-likelihood.
pub fn select(
    emissions: &SlotEmissions,
    trans: &SlotTransitions,
    terms: &[Option<TermId>],
    sets: &[CandidateSlotSet],
    mu: f64,
    misc_slot: SlotId,
) -> Result<(usize, Vec<SlotId>, f64)> {
    if sets.is_empty() {
        return Err(CoreError::NoCandidateSets);
    }
    let mut scores = Vec::with_capacity(sets.len());
    let mut paths = Vec::with_capacity(sets.len());
    for set in sets {
        let (path, joint) = viterbi(emissions, trans, terms, set, misc_slot);
        let mut trans_sum = 0.0;
        for window in path.windows(2) {
            let row = trans.restricted_ln(window[0] as usize, set.slots());
            let idx = set
                .slots()
                .iter()
                .position(|&m| m == window[1])
                .expect("path stays inside the candidate set");
            trans_sum += row[idx];
        }
        scores.push(mu * trans_sum + joint);
        paths.push(path);
    }
    let best = argmax(&scores);
    Ok((best, paths.swap_remove(best), scores[best]))
}
