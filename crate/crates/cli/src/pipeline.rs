//! Orchestration of the train / annotate / rank / eval / synth workflows on
//! top of the core library.
//!
//! Annotation input is JSONL: `{"query": "..."}` per line, plus a
//! `candidates` array of `{"key","value"}` objects when the candidate set is
//! observed. Tag output is `{"query", "keys", "slots"}` with keys aligned to
//! the tokenization and slots listing the distinct non-miscellaneous
//! predictions.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use slotfill_core::candidates::{enumerate_sets, top_t_pools};
use slotfill_core::corpus::{self, tokenize, SlotKv};
use slotfill_core::cusdss::RejectionTerm;
use slotfill_core::evalmetrics::{
    self, JudgmentMap, QueryTagPair, RankedQuery, RetrievalReport,
};
use slotfill_core::ranking::{self, Bm25Params, Catalog, RankMode};
use slotfill_core::{
    cusd, cusdss, msd, usd, CandidateSlotSet, CategoryMixture, RandomSource, SlotId,
    SlotRegistry, SlotEmissions, SlotTransitions, TermId,
};

use crate::persist::{LoadedModel, ModelKind};

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn open_lines(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

pub fn write_output(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct QueryLine {
    query: String,
    #[serde(default)]
    candidates: Option<Vec<SlotKv>>,
}

#[derive(Debug, Serialize)]
struct TagLine {
    query: String,
    keys: Vec<String>,
    slots: Vec<SlotKv>,
}

#[derive(Debug, Deserialize)]
struct TagLineIn {
    query: String,
    keys: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RankEntry {
    product_id: String,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RankLine {
    query: String,
    ranking: Vec<RankEntry>,
}

#[derive(Debug, Deserialize)]
struct GoldLine {
    query: String,
    keys: Vec<String>,
}

/// Inference options for the unobserved-candidate-set path.
#[derive(Debug, Clone, Copy)]
pub struct UnobservedOptions {
    pub top_t: usize,
    pub mu: Option<f64>,
    pub max_sets: usize,
    pub infer_iters: u32,
    pub rejection: RejectionTerm,
}

/// Model with its distributions materialized once.
pub struct PreparedModel {
    pub loaded: LoadedModel,
    emissions: SlotEmissions,
    transitions: Option<SlotTransitions>,
    mixture: Option<CategoryMixture>,
}

impl PreparedModel {
    pub fn new(loaded: LoadedModel) -> Self {
        let (emissions, transitions, mixture) = match &loaded.kind {
            ModelKind::Usd(m) => (m.emissions(), None, None),
            ModelKind::Msd(m) => (m.emissions(), Some(m.trans_probs.clone()), None),
            ModelKind::Cusd(m) => (m.emissions(), None, Some(m.mixture())),
            ModelKind::Cusdss(m) => (m.emissions(), None, Some(m.mixture())),
        };
        Self {
            loaded,
            emissions,
            transitions,
            mixture,
        }
    }

    pub fn registry(&self) -> &SlotRegistry {
        &self.loaded.registry
    }

    fn default_mu(&self) -> f64 {
        match self.loaded.kind {
            ModelKind::Usd(_) => 0.0,
            ModelKind::Msd(_) => 1.0,
            ModelKind::Cusd(_) => 0.15,
            ModelKind::Cusdss(_) => 0.0,
        }
    }

    fn lookup_terms(&self, tokens: &[String]) -> Vec<Option<TermId>> {
        tokens
            .iter()
            .map(|t| self.registry().term_id(t))
            .collect()
    }

    /// Tags a query whose candidate set is observed.
    pub fn annotate_observed(
        &self,
        terms: &[Option<TermId>],
        cands: &CandidateSlotSet,
        infer_iters: u32,
        rng: &mut RandomSource,
    ) -> Vec<SlotId> {
        let misc = self.registry().misc_slot();
        match &self.loaded.kind {
            ModelKind::Usd(_) | ModelKind::Cusd(_) => {
                usd::annotate(&self.emissions, terms, cands, misc)
            }
            ModelKind::Msd(_) => {
                let trans = self.transitions.as_ref().expect("msd has transitions");
                msd::viterbi(&self.emissions, trans, terms, cands, misc).0
            }
            ModelKind::Cusdss(m) => {
                cusdss::infer(m, terms, cands, infer_iters, rng, misc).slots
            }
        }
    }

    /// Enumerates candidate sets from the top-t pools and selects per model.
    pub fn annotate_unobserved(
        &self,
        terms: &[Option<TermId>],
        opts: &UnobservedOptions,
        rng: &RandomSource,
    ) -> Result<Vec<SlotId>> {
        let registry = self.registry();
        let misc = registry.misc_slot();
        let pools = top_t_pools(&self.emissions, registry, terms, opts.top_t);
        let sets = enumerate_sets(registry, &pools, opts.max_sets)?;
        let mu = opts.mu.unwrap_or_else(|| self.default_mu());
        let tags = match &self.loaded.kind {
            ModelKind::Usd(_) => usd::select(&self.emissions, terms, &sets, misc)?.1,
            ModelKind::Msd(_) => {
                let trans = self.transitions.as_ref().expect("msd has transitions");
                msd::select(&self.emissions, trans, terms, &sets, mu, misc)?.1
            }
            ModelKind::Cusd(_) => {
                let mixture = self.mixture.as_ref().expect("cusd has a mixture");
                cusd::select(&self.emissions, mixture, terms, &sets, mu, misc)?.1
            }
            ModelKind::Cusdss(m) => {
                let mixture = self.mixture.as_ref().expect("cusdss has a mixture");
                cusdss::select(
                    m,
                    &self.emissions,
                    mixture,
                    terms,
                    &sets,
                    mu,
                    opts.infer_iters,
                    rng,
                    misc,
                    opts.rejection,
                )?
                .1
            }
        };
        Ok(tags)
    }
}

fn resolve_candidates(
    registry: &SlotRegistry,
    kvs: &[SlotKv],
    query: &str,
) -> Result<(CandidateSlotSet, usize)> {
    let mut ids = Vec::with_capacity(kvs.len());
    let mut dropped = 0usize;
    for kv in kvs {
        let key = kv.key.to_lowercase();
        let value = kv.value.to_lowercase();
        match registry
            .key_id(&key)
            .and_then(|k| registry.slot_id(k, &value))
        {
            Some(id) => ids.push(id),
            None => dropped += 1,
        }
    }
    let set = CandidateSlotSet::new(ids, registry)
        .map_err(|e| anyhow!("query `{query}`: {e}"))?;
    Ok((set, dropped))
}

fn tags_to_line(
    registry: &SlotRegistry,
    query: &str,
    tokens: &[String],
    tags: &[SlotId],
) -> TagLine {
    debug_assert_eq!(tokens.len(), tags.len());
    let keys = tags
        .iter()
        .map(|&m| registry.key(registry.slot_key(m)).to_string())
        .collect();
    let mut distinct: Vec<SlotId> = tags
        .iter()
        .copied()
        .filter(|&m| m != registry.misc_slot())
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    let slots = distinct
        .into_iter()
        .map(|m| {
            let def = registry.slot(m);
            SlotKv {
                key: registry.key(def.key).to_string(),
                value: def.value.clone(),
            }
        })
        .collect();
    TagLine {
        query: query.to_string(),
        keys,
        slots,
    }
}

fn read_query_lines(path: &Path) -> Result<Vec<QueryLine>> {
    let mut lines = Vec::new();
    for (idx, line) in open_lines(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: QueryLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        if tokenize(&parsed.query).is_empty() {
            bail!("{}:{}: empty query", path.display(), idx + 1);
        }
        lines.push(parsed);
    }
    Ok(lines)
}

fn run_pool<T: Send, F: Fn(usize) -> T + Sync + Send>(
    threads: usize,
    count: usize,
    job: F,
) -> Result<Vec<T>> {
    if threads <= 1 {
        return Ok((0..count).map(job).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    use rayon::prelude::*;
    Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
}

/// The annotate workflow: tags every input query, observed or unobserved.
#[allow(clippy::too_many_arguments)]
pub fn annotate(
    model: &PreparedModel,
    queries_path: &Path,
    observed: bool,
    opts: &UnobservedOptions,
    infer_iters: u32,
    seed: u64,
    threads: usize,
    out: Option<&PathBuf>,
) -> Result<()> {
    let lines = read_query_lines(queries_path)?;
    let registry = model.registry();
    let base_rng = RandomSource::from_seed(seed);

    // resolve inputs up-front so data errors surface before any work
    let mut inputs = Vec::with_capacity(lines.len());
    let mut dropped_total = 0usize;
    for line in &lines {
        let tokens = tokenize(&line.query);
        let terms = model.lookup_terms(&tokens);
        let cands = if observed {
            let kvs = line.candidates.as_deref().ok_or_else(|| {
                anyhow!("query `{}`: --observed needs a candidates array", line.query)
            })?;
            let (set, dropped) = resolve_candidates(registry, kvs, &line.query)?;
            dropped_total += dropped;
            Some(set)
        } else {
            None
        };
        inputs.push((line.query.clone(), tokens, terms, cands));
    }
    if dropped_total > 0 {
        eprintln!("warning: dropped {dropped_total} candidate slots unknown to the model");
    }

    let results: Vec<Result<TagLine>> = run_pool(threads, inputs.len(), |i| {
        let (query, tokens, terms, cands) = &inputs[i];
        let mut rng = base_rng.child(i as u64);
        let tags = match cands {
            Some(set) => model.annotate_observed(terms, set, infer_iters, &mut rng),
            None => model.annotate_unobserved(terms, opts, &rng)?,
        };
        Ok(tags_to_line(registry, query, tokens, &tags))
    })?;

    let mut output = String::new();
    for result in results {
        let line = result?;
        output.push_str(&serde_json::to_string(&line).expect("tag line serializes"));
        output.push('\n');
    }
    write_output(out, &output)
}

/// The rank workflow: predicts slots per query (except in bm25 mode) and
/// scores the catalog.
#[allow(clippy::too_many_arguments)]
pub fn rank(
    model: &PreparedModel,
    catalog: &Catalog,
    queries_path: &Path,
    mode: RankMode,
    params: Bm25Params,
    opts: &UnobservedOptions,
    seed: u64,
    threads: usize,
    out: Option<&PathBuf>,
) -> Result<()> {
    let lines = read_query_lines(queries_path)?;
    let registry = model.registry();
    let misc = registry.misc_slot();
    let base_rng = RandomSource::from_seed(seed);

    let inputs: Vec<(String, Vec<String>, Vec<Option<TermId>>)> = lines
        .iter()
        .map(|line| {
            let tokens = tokenize(&line.query);
            let terms = model.lookup_terms(&tokens);
            (line.query.clone(), tokens, terms)
        })
        .collect();

    let results: Vec<Result<RankLine>> = run_pool(threads, inputs.len(), |i| {
        let (query, tokens, terms) = &inputs[i];
        let predicted: Vec<SlotId> = if mode == RankMode::Bm25 {
            Vec::new()
        } else {
            let rng = base_rng.child(i as u64);
            let tags = model.annotate_unobserved(terms, opts, &rng)?;
            let mut distinct = tags;
            distinct.sort_unstable();
            distinct.dedup();
            distinct
        };
        let ranked = ranking::rank_products(&predicted, tokens, catalog, mode, params, misc);
        Ok(RankLine {
            query: query.clone(),
            ranking: ranked
                .entries
                .into_iter()
                .map(|(product_id, score)| RankEntry { product_id, score })
                .collect(),
        })
    })?;

    let mut output = String::new();
    for result in results {
        let line = result?;
        output.push_str(&serde_json::to_string(&line).expect("rank line serializes"));
        output.push('\n');
    }
    write_output(out, &output)
}

/// Joins predictions with gold annotations on normalized query text and
/// computes the tagging report. With `by_length`, emits the length
/// breakdown as CSV instead of the JSON report.
pub fn eval_tagging(
    pred_path: &Path,
    gold_path: &Path,
    by_length: bool,
    out: Option<&PathBuf>,
) -> Result<()> {
    let mut gold: HashMap<String, Vec<String>> = HashMap::new();
    for (idx, line) in open_lines(gold_path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GoldLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", gold_path.display(), idx + 1))?;
        let normalized = tokenize(&parsed.query).join(" ");
        let n_tokens = tokenize(&parsed.query).len();
        if n_tokens != parsed.keys.len() {
            bail!(
                "gold query `{}`: {} tokens but {} keys",
                parsed.query,
                n_tokens,
                parsed.keys.len()
            );
        }
        gold.insert(normalized, parsed.keys);
    }

    let mut pairs = Vec::new();
    for (idx, line) in open_lines(pred_path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TagLineIn = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", pred_path.display(), idx + 1))?;
        let normalized = tokenize(&parsed.query).join(" ");
        if let Some(gold_keys) = gold.get(&normalized) {
            if gold_keys.len() != parsed.keys.len() {
                bail!(
                    "query `{}`: prediction has {} keys, gold has {}",
                    parsed.query,
                    parsed.keys.len(),
                    gold_keys.len()
                );
            }
            pairs.push(QueryTagPair {
                pred: parsed.keys,
                gold: gold_keys.clone(),
            });
        }
    }

    let report = evalmetrics::tagging_metrics(&pairs)?;
    let content = if by_length {
        let mut csv = String::from("length,n_queries,q_accuracy\n");
        for (len, bucket) in &report.by_length {
            csv.push_str(&format!(
                "{},{},{:.6}\n",
                len, bucket.n_queries, bucket.q_accuracy
            ));
        }
        csv
    } else {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        json
    };
    write_output(out, &content)
}

/// Computes MRR and NDCG@k from ranking and judgment files.
pub fn eval_retrieval(
    rankings_path: &Path,
    judgments_path: &Path,
    k: usize,
    out: Option<&PathBuf>,
) -> Result<()> {
    let mut rankings = Vec::new();
    for (idx, line) in open_lines(rankings_path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RankLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", rankings_path.display(), idx + 1))?;
        rankings.push(RankedQuery {
            query: tokenize(&parsed.query).join(" "),
            entries: parsed
                .ranking
                .into_iter()
                .map(|e| (e.product_id, e.score))
                .collect(),
        });
    }
    let judgments: JudgmentMap = evalmetrics::load_judgments(open_lines(judgments_path)?)?;
    let report = RetrievalReport {
        mrr: evalmetrics::mrr(&rankings, &judgments),
        ndcg: evalmetrics::ndcg_at_k(&rankings, &judgments, k)?,
        k,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_output(out, &json)
}

/// Ingests, filters and returns the training corpus.
pub fn load_training_corpus(
    input: &Path,
    min_word_freq: u64,
    min_slot_freq: u64,
) -> Result<corpus::Corpus> {
    let corpus = corpus::ingest_engagement(open_lines(input)?)?;
    if corpus.records.is_empty() {
        bail!("no engagement records in {}", input.display());
    }
    Ok(corpus::filter_corpus(&corpus, min_word_freq, min_slot_freq)?)
}
