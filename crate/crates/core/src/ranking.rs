//! Product ranking for the retrieval task: slot-match counting, Okapi BM25
//! over the product text, and their fusion.
//!
//! Reads `catalog.jsonl` (`{"product_id": "...", "slots": [{"key","value"}]}`)
//! and produces per-query ranked lists ordered by score descending, product
//! id ascending.

use std::collections::HashMap;
use std::io::BufRead;
use std::str::FromStr;

use crate::corpus::{tokenize, SlotId, SlotRegistry};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct ProductDoc {
    pub product_id: String,
    /// Slots resolvable in the registry; unknown slots keep contributing
    /// text but can never match a prediction.
    pub slots: Vec<SlotId>,
    pub tokens: Vec<String>,
    term_freq: HashMap<String, u32>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    pub products: Vec<ProductDoc>,
    doc_freq: HashMap<String, u32>,
    avg_doc_len: f64,
}

#[derive(Debug, serde::Deserialize)]
struct CatalogLine {
    product_id: String,
    slots: Vec<crate::corpus::SlotKv>,
}

/// Builds the catalog index. The product document text is the tokenized
/// concatenation of its slot value strings.
pub fn load_catalog(reader: impl BufRead, registry: &SlotRegistry) -> Result<Catalog> {
    let mut products = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CatalogLine = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if seen.insert(parsed.product_id.clone(), line_no).is_some() {
            return Err(CoreError::Parse {
                line: line_no,
                message: format!("duplicate product_id `{}`", parsed.product_id),
            });
        }
        let mut slots = Vec::new();
        let mut tokens = Vec::new();
        for kv in &parsed.slots {
            let key = kv.key.to_lowercase();
            let value = kv.value.to_lowercase();
            tokens.extend(tokenize(&value));
            if let Some(key_id) = registry.key_id(&key) {
                if let Some(slot_id) = registry.slot_id(key_id, &value) {
                    slots.push(slot_id);
                }
            }
        }
        slots.sort_unstable();
        let mut term_freq = HashMap::new();
        for token in &tokens {
            *term_freq.entry(token.clone()).or_insert(0u32) += 1;
        }
        products.push(ProductDoc {
            product_id: parsed.product_id,
            slots,
            tokens,
            term_freq,
        });
    }
    if products.is_empty() {
        return Err(CoreError::EmptyCatalog);
    }
    let mut doc_freq = HashMap::new();
    let mut total_len = 0usize;
    for product in &products {
        total_len += product.tokens.len();
        for term in product.term_freq.keys() {
            *doc_freq.entry(term.clone()).or_insert(0u32) += 1;
        }
    }
    let avg_doc_len = total_len as f64 / products.len() as f64;
    Ok(Catalog {
        products,
        doc_freq,
        avg_doc_len,
    })
}

/// Number of predicted slots matching the product's characteristics exactly;
/// the miscellaneous slot never matches.
pub fn slot_match_score(predicted: &[SlotId], product: &ProductDoc, misc_slot: SlotId) -> u32 {
    predicted
        .iter()
        .filter(|&&m| m != misc_slot && product.slots.binary_search(&m).is_ok())
        .count() as u32
}

#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Okapi BM25 with `IDF = ln((N - df + 0.5) / (df + 0.5) + 1)`; non-negative.
pub fn bm25_score(
    query_tokens: &[String],
    product: &ProductDoc,
    catalog: &Catalog,
    params: Bm25Params,
) -> f64 {
    let n = catalog.products.len() as f64;
    let dl = product.tokens.len() as f64;
    let mut score = 0.0;
    for token in query_tokens {
        let tf = *product.term_freq.get(token).unwrap_or(&0) as f64;
        if tf == 0.0 {
            continue;
        }
        let df = *catalog.doc_freq.get(token).unwrap_or(&0) as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        let norm = tf + params.k1 * (1.0 - params.b + params.b * dl / catalog.avg_doc_len);
        score += idf * tf * (params.k1 + 1.0) / norm;
    }
    score
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Slots,
    Bm25,
    Fused,
}

impl FromStr for RankMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slots" => Ok(Self::Slots),
            "bm25" => Ok(Self::Bm25),
            "fused" => Ok(Self::Fused),
            other => Err(CoreError::InvalidParameter(format!(
                "unknown ranking mode `{other}` (expected slots, bm25 or fused)"
            ))),
        }
    }
}

/// Ranked products for one query: score descending, product id ascending.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub entries: Vec<(String, f64)>,
}

/// Scores the whole catalog for one query. Fused mode adds the min-max
/// normalized BM25 score to the slot-match count; a constant BM25 column
/// normalizes to zero.
pub fn rank_products(
    predicted: &[SlotId],
    query_tokens: &[String],
    catalog: &Catalog,
    mode: RankMode,
    params: Bm25Params,
    misc_slot: SlotId,
) -> RankedList {
    let bm25: Vec<f64> = match mode {
        RankMode::Slots => Vec::new(),
        RankMode::Bm25 | RankMode::Fused => catalog
            .products
            .iter()
            .map(|p| bm25_score(query_tokens, p, catalog, params))
            .collect(),
    };
    let scores: Vec<f64> = match mode {
        RankMode::Slots => catalog
            .products
            .iter()
            .map(|p| slot_match_score(predicted, p, misc_slot) as f64)
            .collect(),
        RankMode::Bm25 => bm25.clone(),
        RankMode::Fused => {
            let min = bm25.iter().copied().fold(f64::INFINITY, f64::min);
            let max = bm25.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            catalog
                .products
                .iter()
                .zip(&bm25)
                .map(|(p, &raw)| {
                    let normalized = if range > 0.0 { (raw - min) / range } else { 0.0 };
                    slot_match_score(predicted, p, misc_slot) as f64 + normalized
                })
                .collect()
        }
    };
    let mut entries: Vec<(String, f64)> = catalog
        .products
        .iter()
        .zip(scores)
        .map(|(p, s)| (p.product_id.clone(), s))
        .collect();
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("ranking scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    RankedList { entries }
}
