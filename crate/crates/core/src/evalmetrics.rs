//! Tagging metrics (accuracy, q-accuracy, macro precision/recall/F1, the
//! by-length breakdown) and retrieval metrics (MRR, tie-aware NDCG@k).

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Predicted and gold slot-keys for one query, aligned per word.
#[derive(Debug, Clone)]
pub struct QueryTagPair {
    pub pred: Vec<String>,
    pub gold: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthBucket {
    pub n_queries: usize,
    pub q_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggingReport {
    pub accuracy: f64,
    pub q_accuracy: f64,
    pub per_key: BTreeMap<String, KeyScores>,
    pub avg_prec: f64,
    pub avg_rec: f64,
    pub avg_f1: f64,
    pub by_length: BTreeMap<usize, LengthBucket>,
}

/// Word-level accuracy, query-averaged accuracy, and macro scores over the
/// slot-keys present in the gold annotations. Keys that are never predicted
/// score zero precision; per-key F1 is zero when precision and recall are
/// both zero. `avg_f1` is the mean of the per-key F1 values, not the F1 of
/// the mean precision and recall.
pub fn tagging_metrics(pairs: &[QueryTagPair]) -> Result<TaggingReport> {
    if pairs.is_empty() {
        return Err(CoreError::NoOverlap);
    }
    let mut total_words = 0usize;
    let mut total_correct = 0usize;
    let mut q_acc_sum = 0.0;
    let mut gold_count: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pred_count: HashMap<&str, usize> = HashMap::new();
    let mut correct_count: HashMap<&str, usize> = HashMap::new();
    let mut by_length: BTreeMap<usize, (usize, f64)> = BTreeMap::new();

    for pair in pairs {
        if pair.pred.len() != pair.gold.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} predicted keys vs {} gold keys",
                pair.pred.len(),
                pair.gold.len()
            )));
        }
        let len = pair.gold.len();
        let mut correct = 0usize;
        for (p, g) in pair.pred.iter().zip(&pair.gold) {
            *gold_count.entry(g).or_insert(0) += 1;
            *pred_count.entry(p).or_insert(0) += 1;
            if p == g {
                correct += 1;
                *correct_count.entry(g.as_str()).or_insert(0) += 1;
            }
        }
        total_words += len;
        total_correct += correct;
        let fraction = correct as f64 / len as f64;
        q_acc_sum += fraction;
        let bucket = by_length.entry(len).or_insert((0, 0.0));
        bucket.0 += 1;
        bucket.1 += fraction;
    }

    let mut per_key = BTreeMap::new();
    let mut prec_sum = 0.0;
    let mut rec_sum = 0.0;
    let mut f1_sum = 0.0;
    for (&key, &gold) in &gold_count {
        let predicted = pred_count.get(key).copied().unwrap_or(0);
        let correct = correct_count.get(key).copied().unwrap_or(0);
        let precision = if predicted > 0 {
            correct as f64 / predicted as f64
        } else {
            0.0
        };
        let recall = correct as f64 / gold as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        prec_sum += precision;
        rec_sum += recall;
        f1_sum += f1;
        per_key.insert(
            key.to_string(),
            KeyScores {
                precision,
                recall,
                f1,
            },
        );
    }
    let n_keys = per_key.len() as f64;

    Ok(TaggingReport {
        accuracy: total_correct as f64 / total_words as f64,
        q_accuracy: q_acc_sum / pairs.len() as f64,
        avg_prec: prec_sum / n_keys,
        avg_rec: rec_sum / n_keys,
        avg_f1: f1_sum / n_keys,
        per_key,
        by_length: by_length
            .into_iter()
            .map(|(len, (n, sum))| {
                (
                    len,
                    LengthBucket {
                        n_queries: n,
                        q_accuracy: sum / n as f64,
                    },
                )
            })
            .collect(),
    })
}

/// Ranked product list for one query, as produced by the ranking stage.
#[derive(Debug, Clone)]
pub struct RankedQuery {
    pub query: String,
    pub entries: Vec<(String, f64)>,
}

/// query -> product -> purchase count.
pub type JudgmentMap = HashMap<String, HashMap<String, u64>>;

#[derive(Debug, Deserialize)]
struct JudgmentLine {
    query: String,
    product_id: String,
    purchases: u64,
}

/// Reads `judgments.jsonl`, summing duplicate (query, product) pairs. Query
/// strings are normalized with the shared tokenizer.
pub fn load_judgments(reader: impl BufRead) -> Result<JudgmentMap> {
    let mut map: JudgmentMap = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JudgmentLine = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let query = crate::corpus::tokenize(&parsed.query).join(" ");
        *map.entry(query)
            .or_default()
            .entry(parsed.product_id)
            .or_insert(0) += parsed.purchases;
    }
    Ok(map)
}

/// Mean reciprocal rank. The relevant products of a query are the ones
/// attaining its maximum purchase count; queries without judged products
/// contribute zero.
pub fn mrr(rankings: &[RankedQuery], judgments: &JudgmentMap) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for ranking in rankings {
        let Some(judged) = judgments.get(&ranking.query) else {
            continue;
        };
        let Some(&max) = judged.values().max() else {
            continue;
        };
        for (rank, (product, _)) in ranking.entries.iter().enumerate() {
            if judged.get(product).copied() == Some(max) {
                sum += 1.0 / (rank + 1) as f64;
                break;
            }
        }
    }
    sum / rankings.len() as f64
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@k with linear gains (purchase counts) and deterministic tie
/// handling: products sharing a ranking score form a tie group whose gains
/// are replaced by the group average across its occupied ranks.
pub fn ndcg_at_k(rankings: &[RankedQuery], judgments: &JudgmentMap, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(CoreError::InvalidParameter("NDCG cutoff must be >= 1".into()));
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for ranking in rankings {
        let judged = judgments.get(&ranking.query);
        let gain = |product: &str| -> f64 {
            judged
                .and_then(|j| j.get(product))
                .copied()
                .unwrap_or(0) as f64
        };

        let mut dcg = 0.0;
        let mut start = 0;
        while start < ranking.entries.len() && start < k {
            let score = ranking.entries[start].1;
            let mut end = start + 1;
            while end < ranking.entries.len() && ranking.entries[end].1 == score {
                end += 1;
            }
            let group_gain: f64 = ranking.entries[start..end]
                .iter()
                .map(|(p, _)| gain(p))
                .sum();
            let avg_gain = group_gain / (end - start) as f64;
            for rank in start..end.min(k) {
                dcg += avg_gain * discount(rank + 1);
            }
            start = end;
        }

        let mut ideal: Vec<f64> = judged
            .map(|j| j.values().map(|&g| g as f64).collect())
            .unwrap_or_default();
        ideal.sort_by(|a, b| b.partial_cmp(a).expect("gains are finite"));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(rank, &g)| g * discount(rank + 1))
            .sum();
        if idcg > 0.0 {
            sum += dcg / idcg;
        }
    }
    Ok(sum / rankings.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub mrr: f64,
    pub ndcg: f64,
    pub k: usize,
}
