//! Data model and ingestion: term/slot/key registries, engagement records,
//! frequency filtering and gold annotations.
//!
//! File formats (one JSON object per line):
//!
//! * `engagement.jsonl` — `{"query": "...", "slots": [{"key": "...", "value": "..."}]}`
//! * `annotations.jsonl` — `{"query": "...", "keys": ["...", ...]}`

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub type TermId = u32;
pub type SlotId = u32;
pub type KeyId = u32;

/// Reserved slot-key for query words that fit no product characteristic.
pub const MISC_NAME: &str = "miscellaneous";

/// Lowercase + whitespace tokenization; the single rule used everywhere.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotDef {
    pub key: KeyId,
    pub value: String,
}

/// Bijections term <-> id, slot(key,value) <-> id and slot-key <-> id, with
/// dense ids that stay stable for the registry's lifetime. The miscellaneous
/// key and slot always exist and occupy id 0.
#[derive(Debug, Clone)]
pub struct SlotRegistry {
    terms: Vec<String>,
    term_lookup: HashMap<String, TermId>,
    slots: Vec<SlotDef>,
    slot_lookup: HashMap<(KeyId, String), SlotId>,
    keys: Vec<String>,
    key_lookup: HashMap<String, KeyId>,
    by_key: Vec<Vec<SlotId>>,
}

impl Default for SlotRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl SlotRegistry {
    pub fn new() -> Self {
        let mut registry = Self {
            terms: Vec::new(),
            term_lookup: HashMap::new(),
            slots: Vec::new(),
            slot_lookup: HashMap::new(),
            keys: Vec::new(),
            key_lookup: HashMap::new(),
            by_key: Vec::new(),
        };
        let misc_key = registry.intern_key(MISC_NAME);
        let misc_slot = registry.intern_slot(misc_key, MISC_NAME);
        debug_assert_eq!(misc_key, 0);
        debug_assert_eq!(misc_slot, 0);
        registry
    }

    pub fn misc_slot(&self) -> SlotId {
        0
    }

    pub fn misc_key(&self) -> KeyId {
        0
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn num_keys(&self) -> usize {
        self.keys.len()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn term_id(&self, term: &str) -> Option<TermId> {
        self.term_lookup.get(term).copied()
    }

    pub fn slot(&self, id: SlotId) -> &SlotDef {
        &self.slots[id as usize]
    }

    pub fn slot_key(&self, id: SlotId) -> KeyId {
        self.slots[id as usize].key
    }

    pub fn slot_id(&self, key: KeyId, value: &str) -> Option<SlotId> {
        self.slot_lookup.get(&(key, value.to_string())).copied()
    }

    pub fn key(&self, id: KeyId) -> &str {
        &self.keys[id as usize]
    }

    pub fn key_id(&self, key: &str) -> Option<KeyId> {
        self.key_lookup.get(key).copied()
    }

    /// Slot ids belonging to one key, ascending.
    pub fn slots_of_key(&self, key: KeyId) -> &[SlotId] {
        &self.by_key[key as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn slot_defs(&self) -> &[SlotDef] {
        &self.slots
    }

    pub fn intern_term(&mut self, term: &str) -> TermId {
        if let Some(&id) = self.term_lookup.get(term) {
            return id;
        }
        let id = self.terms.len() as TermId;
        self.terms.push(term.to_string());
        self.term_lookup.insert(term.to_string(), id);
        id
    }

    pub fn intern_key(&mut self, key: &str) -> KeyId {
        if let Some(&id) = self.key_lookup.get(key) {
            return id;
        }
        let id = self.keys.len() as KeyId;
        self.keys.push(key.to_string());
        self.key_lookup.insert(key.to_string(), id);
        self.by_key.push(Vec::new());
        id
    }

    pub fn intern_slot(&mut self, key: KeyId, value: &str) -> SlotId {
        if let Some(&id) = self.slot_lookup.get(&(key, value.to_string())) {
            return id;
        }
        let id = self.slots.len() as SlotId;
        self.slots.push(SlotDef {
            key,
            value: value.to_string(),
        });
        self.slot_lookup.insert((key, value.to_string()), id);
        self.by_key[key as usize].push(id);
        id
    }
}

/// A tokenized query as term ids; never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub terms: Vec<TermId>,
}

/// Set of candidate slot ids for one query: at most one slot per slot-key,
/// always containing the miscellaneous slot. Stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateSlotSet {
    slots: Vec<SlotId>,
}

impl CandidateSlotSet {
    /// Validates one-slot-per-key and inserts the miscellaneous slot.
    pub fn new(mut slots: Vec<SlotId>, registry: &SlotRegistry) -> Result<Self> {
        if !slots.contains(&registry.misc_slot()) {
            slots.push(registry.misc_slot());
        }
        slots.sort_unstable();
        slots.dedup();
        let mut seen_keys = Vec::with_capacity(slots.len());
        for &slot in &slots {
            let key = registry.slot_key(slot);
            if seen_keys.contains(&key) {
                return Err(CoreError::DuplicateKey {
                    key: registry.key(key).to_string(),
                });
            }
            seen_keys.push(key);
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> &[SlotId] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, slot: SlotId) -> bool {
        self.slots.binary_search(&slot).is_ok()
    }
}

/// One (query, candidate slot-set) training pair; one record per engaged
/// item.
#[derive(Debug, Clone)]
pub struct EngagementRecord {
    pub query: Query,
    pub candidates: CandidateSlotSet,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub registry: SlotRegistry,
    pub records: Vec<EngagementRecord>,
}

impl Corpus {
    /// Total number of word positions across all records.
    pub fn total_words(&self) -> usize {
        self.records.iter().map(|r| r.query.terms.len()).sum()
    }
}

/// A manually annotated query: slot-key per token.
#[derive(Debug, Clone)]
pub struct GoldAnnotation {
    pub tokens: Vec<String>,
    pub keys: Vec<KeyId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SlotKv {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EngagementLine {
    query: String,
    slots: Vec<SlotKv>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationLine {
    query: String,
    keys: Vec<String>,
}

/// Reads engagement records, building the registry over all observed terms
/// and slots. Every candidate set is validated (one slot per key) and
/// augmented with the miscellaneous slot. Keys and values are lowercased.
pub fn ingest_engagement(reader: impl BufRead) -> Result<Corpus> {
    let mut registry = SlotRegistry::new();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EngagementLine =
            serde_json::from_str(&line).map_err(|e| CoreError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let tokens = tokenize(&parsed.query);
        if tokens.is_empty() {
            return Err(CoreError::Parse {
                line: line_no,
                message: "empty query".into(),
            });
        }
        let terms = tokens.iter().map(|t| registry.intern_term(t)).collect();
        let mut slot_ids = Vec::with_capacity(parsed.slots.len());
        for kv in &parsed.slots {
            let key = registry.intern_key(&kv.key.to_lowercase());
            slot_ids.push(registry.intern_slot(key, &kv.value.to_lowercase()));
        }
        let candidates = CandidateSlotSet::new(slot_ids, &registry)?;
        records.push(EngagementRecord {
            query: Query { terms },
            candidates,
        });
    }
    Ok(Corpus { registry, records })
}

/// Writes records back out in the engagement format. The injected
/// miscellaneous slot is omitted, so re-ingesting reproduces the corpus.
pub fn write_engagement(corpus: &Corpus, mut writer: impl Write) -> Result<()> {
    for record in &corpus.records {
        let query = record
            .query
            .terms
            .iter()
            .map(|&t| corpus.registry.term(t))
            .collect::<Vec<_>>()
            .join(" ");
        let slots: Vec<SlotKv> = record
            .candidates
            .slots()
            .iter()
            .filter(|&&s| s != corpus.registry.misc_slot())
            .map(|&s| {
                let def = corpus.registry.slot(s);
                SlotKv {
                    key: corpus.registry.key(def.key).to_string(),
                    value: def.value.clone(),
                }
            })
            .collect();
        let line = serde_json::to_string(&EngagementLine { query, slots })
            .expect("engagement line serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Drops records containing infrequent words (iterated to a fixed point, so
/// the operation is idempotent) and prunes infrequent slots from candidate
/// sets, then re-densifies all ids.
pub fn filter_corpus(
    corpus: &Corpus,
    min_word_freq: u64,
    min_slot_freq: u64,
) -> Result<Corpus> {
    assert!(min_word_freq >= 1 && min_slot_freq >= 1);
    let mut alive: Vec<bool> = vec![true; corpus.records.len()];
    loop {
        let mut word_freq = vec![0u64; corpus.registry.num_terms()];
        for (record, &keep) in corpus.records.iter().zip(&alive) {
            if keep {
                for &t in &record.query.terms {
                    word_freq[t as usize] += 1;
                }
            }
        }
        let mut changed = false;
        for (record, keep) in corpus.records.iter().zip(alive.iter_mut()) {
            if *keep
                && record
                    .query
                    .terms
                    .iter()
                    .any(|&t| word_freq[t as usize] < min_word_freq)
            {
                *keep = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut slot_record_count = vec![0u64; corpus.registry.num_slots()];
    for (record, &keep) in corpus.records.iter().zip(&alive) {
        if keep {
            for &s in record.candidates.slots() {
                slot_record_count[s as usize] += 1;
            }
        }
    }

    let mut registry = SlotRegistry::new();
    let mut records = Vec::new();
    for (record, &keep) in corpus.records.iter().zip(&alive) {
        if !keep {
            continue;
        }
        let terms = record
            .query
            .terms
            .iter()
            .map(|&t| registry.intern_term(corpus.registry.term(t)))
            .collect();
        let mut slot_ids = Vec::new();
        for &s in record.candidates.slots() {
            if s == corpus.registry.misc_slot() {
                continue;
            }
            if slot_record_count[s as usize] >= min_slot_freq {
                let def = corpus.registry.slot(s);
                let key = registry.intern_key(corpus.registry.key(def.key));
                slot_ids.push(registry.intern_slot(key, &def.value));
            }
        }
        let candidates = CandidateSlotSet::new(slot_ids, &registry)?;
        records.push(EngagementRecord {
            query: Query { terms },
            candidates,
        });
    }
    if records.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    Ok(Corpus { registry, records })
}

/// Loads gold annotations; every key must already exist in the registry and
/// key sequences must align with the tokenized queries.
pub fn load_gold(reader: impl BufRead, registry: &SlotRegistry) -> Result<Vec<GoldAnnotation>> {
    let mut annotations = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine =
            serde_json::from_str(&line).map_err(|e| CoreError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let tokens = tokenize(&parsed.query);
        if tokens.len() != parsed.keys.len() {
            return Err(CoreError::LengthMismatch {
                query: parsed.query,
                tokens: tokens.len(),
                keys: parsed.keys.len(),
            });
        }
        let keys = parsed
            .keys
            .iter()
            .map(|k| {
                registry
                    .key_id(&k.to_lowercase())
                    .ok_or_else(|| CoreError::UnknownKey { key: k.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        annotations.push(GoldAnnotation { tokens, keys });
    }
    Ok(annotations)
}
