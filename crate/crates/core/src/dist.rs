//! Dirichlet-categorical machinery shared by all models: count tables,
//! posterior means, seeded sampling and log-space normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{SlotId, TermId};
use crate::error::{CoreError, Result};

/// Concentration parameters of a Dirichlet distribution. Every entry is
/// strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    concentration: Vec<f64>,
    total: f64,
}

impl DirichletPrior {
    pub fn symmetric(dim: usize, value: f64) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidParameter(
                "Dirichlet prior needs at least one dimension".into(),
            ));
        }
        if !value.is_finite() || value <= 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "Dirichlet concentration must be positive, got {value}"
            )));
        }
        Ok(Self {
            concentration: vec![value; dim],
            total: value * dim as f64,
        })
    }

    pub fn from_vec(concentration: Vec<f64>) -> Result<Self> {
        if concentration.is_empty() {
            return Err(CoreError::InvalidParameter(
                "Dirichlet prior needs at least one dimension".into(),
            ));
        }
        if concentration.iter().any(|&c| !c.is_finite() || c <= 0.0) {
            return Err(CoreError::InvalidParameter(
                "Dirichlet concentration entries must be positive".into(),
            ));
        }
        let total = concentration.iter().sum();
        Ok(Self {
            concentration,
            total,
        })
    }

    pub fn dim(&self) -> usize {
        self.concentration.len()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.concentration[i]
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Posterior mean of a categorical distribution under a Dirichlet prior:
/// `x_i = (lambda_i + n_i) / sum_j (lambda_j + n_j)`.
pub fn posterior_mean(prior: &DirichletPrior, counts: &[u64]) -> Result<Vec<f64>> {
    if prior.dim() != counts.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "prior has {} entries, counts have {}",
            prior.dim(),
            counts.len()
        )));
    }
    let total = prior.total() + counts.iter().sum::<u64>() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &n)| (prior.value(i) + n as f64) / total)
        .collect())
}

/// Dense table of non-negative integer counts with cached row totals.
///
/// Decrementing a zero cell is a bug in the caller and panics rather than
/// saturating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    rows: usize,
    cols: usize,
    cells: Vec<u64>,
    row_totals: Vec<u64>,
}

impl CountTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![0; rows * cols],
            row_totals: vec![0; rows],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(CoreError::DimensionMismatch(
                "ragged count table rows".into(),
            ));
        }
        let mut table = Self::new(n_rows, n_cols);
        for (r, row) in rows.into_iter().enumerate() {
            for (c, n) in row.into_iter().enumerate() {
                table.cells[r * n_cols + c] = n;
                table.row_totals[r] += n;
            }
        }
        Ok(table)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.cells[row * self.cols + col]
    }

    #[inline]
    pub fn inc(&mut self, row: usize, col: usize) {
        self.cells[row * self.cols + col] += 1;
        self.row_totals[row] += 1;
    }

    #[inline]
    pub fn dec(&mut self, row: usize, col: usize) {
        let cell = &mut self.cells[row * self.cols + col];
        assert!(*cell > 0, "count table decrement below zero at ({row},{col})");
        *cell -= 1;
        self.row_totals[row] -= 1;
    }

    #[inline]
    pub fn row_total(&self, row: usize) -> u64 {
        self.row_totals[row]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn grand_total(&self) -> u64 {
        self.row_totals.iter().sum()
    }

    /// Recomputes every row total from the cells and checks it against the
    /// cached value.
    pub fn audit(&self) -> bool {
        (0..self.rows).all(|r| self.row(r).iter().sum::<u64>() == self.row_totals[r])
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

/// Deterministic random stream: identical seed and call sequence give
/// identical draws. `child` derives an independent stream, used to give each
/// query its own stream in parallel phases and to keep the word-tagging
/// draws of the category models aligned with the plain sampler.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Derives stream `index` without consuming state from `self`.
    pub fn child(&self, index: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(index.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `[0, n)` from a single draw.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }
}

impl rand::RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Samples an index proportionally to `weights`, consuming exactly one
/// uniform draw.
pub fn sample_index(weights: &[f64], rng: &mut RandomSource) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(CoreError::InvalidWeights(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(CoreError::InvalidWeights("all weights are zero".into()));
    }
    let target = rng.next_f64() * total;
    let mut cumulative = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        cumulative += w;
        if target < cumulative {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

/// Log-sum-exp with the shift-by-max identity.
pub fn log_sum_weights(log_weights: &[f64]) -> Result<f64> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CoreError::InvalidWeights(
            "all log-weights are -inf".into(),
        ));
    }
    let sum: f64 = log_weights.iter().map(|&lw| (lw - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Exp-normalizes log-space weights into a probability vector.
pub fn normalize_log(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|lw| lw.is_nan() || *lw == f64::INFINITY) {
        return Err(CoreError::InvalidWeights("non-finite log-weight".into()));
    }
    let lse = log_sum_weights(log_weights)?;
    Ok(log_weights.iter().map(|&lw| (lw - lse).exp()).collect())
}

/// Samples an index from unnormalized log-space weights.
pub fn sample_log_index(log_weights: &[f64], rng: &mut RandomSource) -> Result<usize> {
    let probs = normalize_log(log_weights)?;
    sample_index(&probs, rng)
}

/// Index of the first maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-slot categorical distributions over the vocabulary, materialized from
/// counts via the posterior mean.
#[derive(Debug, Clone)]
pub struct SlotEmissions {
    probs: Vec<Vec<f64>>,
}

impl SlotEmissions {
    pub fn from_counts(delta: f64, slot_word: &CountTable) -> Self {
        let prior = DirichletPrior::symmetric(slot_word.cols(), delta)
            .expect("emission prior must be positive");
        let probs = (0..slot_word.rows())
            .map(|m| posterior_mean(&prior, slot_word.row(m)).expect("dimensions match"))
            .collect();
        Self { probs }
    }

    /// Builds from explicit probability rows (fixtures and planted models).
    pub fn from_rows(probs: Vec<Vec<f64>>) -> Self {
        Self { probs }
    }

    pub fn num_slots(&self) -> usize {
        self.probs.len()
    }

    pub fn num_terms(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn prob(&self, slot: SlotId, term: TermId) -> f64 {
        self.probs[slot as usize][term as usize]
    }

    #[inline]
    pub fn ln_prob(&self, slot: SlotId, term: TermId) -> f64 {
        self.prob(slot, term).ln()
    }
}

/// Slot-to-slot transition distributions with a dedicated start row at index
/// `num_slots`.
#[derive(Debug, Clone)]
pub struct SlotTransitions {
    probs: Vec<Vec<f64>>,
}

impl SlotTransitions {
    pub fn from_counts(zeta: f64, transitions: &CountTable) -> Self {
        let prior = DirichletPrior::symmetric(transitions.cols(), zeta)
            .expect("transition prior must be positive");
        let probs = (0..transitions.rows())
            .map(|m| posterior_mean(&prior, transitions.row(m)).expect("dimensions match"))
            .collect();
        Self { probs }
    }

    pub fn from_rows(probs: Vec<Vec<f64>>) -> Self {
        Self { probs }
    }

    pub fn uniform(num_slots: usize) -> Self {
        let p = 1.0 / num_slots as f64;
        Self {
            probs: vec![vec![p; num_slots]; num_slots + 1],
        }
    }

    pub fn num_slots(&self) -> usize {
        self.probs.len() - 1
    }

    /// Row index used for the transition into the first position.
    pub fn start_index(&self) -> usize {
        self.num_slots()
    }

    /// Raw transition probability; `from` may be `start_index()`.
    #[inline]
    pub fn prob(&self, from: usize, to: SlotId) -> f64 {
        self.probs[from][to as usize]
    }

    /// Log-probabilities of `from -> cand` restricted to the candidate slots
    /// and renormalized over them.
    pub fn restricted_ln(&self, from: usize, cands: &[SlotId]) -> Vec<f64> {
        let row = &self.probs[from];
        let total: f64 = cands.iter().map(|&m| row[m as usize]).sum();
        let ln_total = total.ln();
        cands
            .iter()
            .map(|&m| row[m as usize].ln() - ln_total)
            .collect()
    }
}

/// Category prior and per-category slot distributions materialized from the
/// category counts.
#[derive(Debug, Clone)]
pub struct CategoryMixture {
    class_probs: Vec<f64>,
    slot_probs: Vec<Vec<f64>>,
}

impl CategoryMixture {
    pub fn from_counts(alpha: f64, class_counts: &[u64], beta: f64, slot_counts: &CountTable) -> Self {
        let class_prior = DirichletPrior::symmetric(class_counts.len(), alpha)
            .expect("category prior must be positive");
        let slot_prior = DirichletPrior::symmetric(slot_counts.cols(), beta)
            .expect("slot prior must be positive");
        let class_probs = posterior_mean(&class_prior, class_counts).expect("dimensions match");
        let slot_probs = (0..slot_counts.rows())
            .map(|k| posterior_mean(&slot_prior, slot_counts.row(k)).expect("dimensions match"))
            .collect();
        Self {
            class_probs,
            slot_probs,
        }
    }

    pub fn from_parts(class_probs: Vec<f64>, slot_probs: Vec<Vec<f64>>) -> Self {
        Self {
            class_probs,
            slot_probs,
        }
    }

    pub fn num_categories(&self) -> usize {
        self.class_probs.len()
    }

    #[inline]
    pub fn ln_class_prob(&self, k: usize) -> f64 {
        self.class_probs[k].ln()
    }

    #[inline]
    pub fn slot_prob(&self, k: usize, col: usize) -> f64 {
        self.slot_probs[k][col]
    }

    #[inline]
    pub fn ln_slot_prob(&self, k: usize, col: usize) -> f64 {
        self.slot_probs[k][col].ln()
    }
}
