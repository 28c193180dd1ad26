//! Model persistence. Count tables (not materialized probabilities) are
//! stored so that every distribution is exactly reconstructible and model
//! files stay diffable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use slotfill_core::cusd::{CusdModel, CusdParams};
use slotfill_core::cusdss::{CusdssModel, CusdssParams};
use slotfill_core::msd::MsdModel;
use slotfill_core::usd::UsdModel;
use slotfill_core::{CountTable, SlotRegistry, SlotTransitions};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("unsupported model file version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("model file schema: {0}")]
    Schema(String),
    #[error("model type mismatch: file contains {found}, {wanted} required")]
    TypeMismatch { found: String, wanted: String },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum ModelType {
    Usd,
    Msd,
    Cusd,
    Cusdss,
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelType::Usd => "usd",
            ModelType::Msd => "msd",
            ModelType::Cusd => "cusd",
            ModelType::Cusdss => "cusdss",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HyperParams {
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_categories: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SlotEntry {
    key: u32,
    value: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryFile {
    terms: Vec<String>,
    keys: Vec<String>,
    slots: Vec<SlotEntry>,
    misc_slot: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountsFile {
    slot_word: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transitions: Option<Vec<Vec<u64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category_slot: Option<Vec<Vec<u64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category_slot_extended: Option<Vec<Vec<u64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model_type: ModelType,
    seed: u64,
    iterations: u32,
    hyperparameters: HyperParams,
    registry: RegistryFile,
    counts: CountsFile,
}

/// A trained model ready for inference, together with its registry.
#[derive(Debug)]
pub enum ModelKind {
    Usd(UsdModel),
    Msd(MsdModel),
    Cusd(CusdModel),
    Cusdss(CusdssModel),
}

#[derive(Debug)]
pub struct LoadedModel {
    pub registry: SlotRegistry,
    pub kind: ModelKind,
    pub seed: u64,
    pub iterations: u32,
}

impl LoadedModel {
    pub fn model_type(&self) -> ModelType {
        match self.kind {
            ModelKind::Usd(_) => ModelType::Usd,
            ModelKind::Msd(_) => ModelType::Msd,
            ModelKind::Cusd(_) => ModelType::Cusd,
            ModelKind::Cusdss(_) => ModelType::Cusdss,
        }
    }

    pub fn require_msd(&self) -> Result<&MsdModel, PersistError> {
        match &self.kind {
            ModelKind::Msd(m) => Ok(m),
            _ => Err(PersistError::TypeMismatch {
                found: self.model_type().to_string(),
                wanted: "msd".into(),
            }),
        }
    }
}

fn registry_to_file(registry: &SlotRegistry) -> RegistryFile {
    RegistryFile {
        terms: registry.terms().to_vec(),
        keys: registry.keys().to_vec(),
        slots: registry
            .slot_defs()
            .iter()
            .map(|def| SlotEntry {
                key: def.key,
                value: def.value.clone(),
            })
            .collect(),
        misc_slot: registry.misc_slot(),
    }
}

fn registry_from_file(file: &RegistryFile) -> Result<SlotRegistry, PersistError> {
    let mut registry = SlotRegistry::new();
    if file.keys.first().map(String::as_str) != Some("miscellaneous") || file.misc_slot != 0 {
        return Err(PersistError::Schema(
            "registry must start with the miscellaneous key and slot".into(),
        ));
    }
    for key in &file.keys {
        registry.intern_key(key);
    }
    if registry.num_keys() != file.keys.len() {
        return Err(PersistError::Schema("duplicate keys in registry".into()));
    }
    for (idx, slot) in file.slots.iter().enumerate() {
        if slot.key as usize >= file.keys.len() {
            return Err(PersistError::Schema(format!(
                "slot {idx} references unknown key {}",
                slot.key
            )));
        }
        registry.intern_slot(slot.key, &slot.value);
    }
    if registry.num_slots() != file.slots.len() {
        return Err(PersistError::Schema("duplicate slots in registry".into()));
    }
    for term in &file.terms {
        registry.intern_term(term);
    }
    if registry.num_terms() != file.terms.len() {
        return Err(PersistError::Schema("duplicate terms in registry".into()));
    }
    Ok(registry)
}

fn table_to_rows(table: &CountTable) -> Vec<Vec<u64>> {
    table.to_rows()
}

fn table_from_rows(
    rows: &[Vec<u64>],
    expect_rows: usize,
    expect_cols: usize,
    what: &str,
) -> Result<CountTable, PersistError> {
    if rows.len() != expect_rows || rows.iter().any(|r| r.len() != expect_cols) {
        return Err(PersistError::Schema(format!(
            "{what} table must be {expect_rows} x {expect_cols}"
        )));
    }
    CountTable::from_rows(rows.to_vec())
        .map_err(|e| PersistError::Schema(format!("{what}: {e}")))
}

pub fn save_model(model: &LoadedModel) -> String {
    let (hyper, counts) = match &model.kind {
        ModelKind::Usd(m) => (
            HyperParams {
                delta: m.delta,
                zeta: None,
                alpha: None,
                beta: None,
                gamma: None,
                num_categories: None,
            },
            CountsFile {
                slot_word: table_to_rows(&m.slot_word),
                transitions: None,
                category: None,
                category_slot: None,
                category_slot_extended: None,
            },
        ),
        ModelKind::Msd(m) => (
            HyperParams {
                delta: m.delta,
                zeta: Some(m.zeta),
                alpha: None,
                beta: None,
                gamma: None,
                num_categories: None,
            },
            CountsFile {
                slot_word: table_to_rows(&m.slot_word),
                transitions: Some(table_to_rows(&m.transitions)),
                category: None,
                category_slot: None,
                category_slot_extended: None,
            },
        ),
        ModelKind::Cusd(m) => (
            HyperParams {
                delta: m.params.delta,
                zeta: None,
                alpha: Some(m.params.alpha),
                beta: Some(m.params.beta),
                gamma: None,
                num_categories: Some(m.params.num_categories),
            },
            CountsFile {
                slot_word: table_to_rows(&m.slot_word),
                transitions: None,
                category: Some(m.category_counts.clone()),
                category_slot: Some(table_to_rows(&m.category_slot)),
                category_slot_extended: None,
            },
        ),
        ModelKind::Cusdss(m) => (
            HyperParams {
                delta: m.params.delta,
                zeta: None,
                alpha: Some(m.params.alpha),
                beta: Some(m.params.beta),
                gamma: Some(m.params.gamma),
                num_categories: Some(m.params.num_categories),
            },
            CountsFile {
                slot_word: table_to_rows(&m.slot_word),
                transitions: None,
                category: Some(m.category_counts.clone()),
                category_slot: None,
                category_slot_extended: Some(table_to_rows(&m.category_slot_ext)),
            },
        ),
    };
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model_type: model.model_type(),
        seed: model.seed,
        iterations: model.iterations,
        hyperparameters: hyper,
        registry: registry_to_file(&model.registry),
        counts,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model file serializes");
    text.push('\n');
    text
}

pub fn load_model(text: &str) -> Result<LoadedModel, PersistError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(PersistError::Version {
            found: file.format_version,
        });
    }
    let registry = registry_from_file(&file.registry)?;
    let num_slots = registry.num_slots();
    let num_terms = registry.num_terms();
    let slot_word = table_from_rows(&file.counts.slot_word, num_slots, num_terms, "slot-word")?;
    let hyper = &file.hyperparameters;

    let require = |value: Option<f64>, name: &str| {
        value.ok_or_else(|| PersistError::Schema(format!("missing hyperparameter `{name}`")))
    };

    let kind = match file.model_type {
        ModelType::Usd => ModelKind::Usd(UsdModel {
            delta: hyper.delta,
            slot_word,
            assignments: Vec::new(),
        }),
        ModelType::Msd => {
            let zeta = require(hyper.zeta, "zeta")?;
            let rows = file
                .counts
                .transitions
                .as_ref()
                .ok_or_else(|| PersistError::Schema("missing transition counts".into()))?;
            let transitions = table_from_rows(rows, num_slots + 1, num_slots, "transition")?;
            let trans_probs = SlotTransitions::from_counts(zeta, &transitions);
            ModelKind::Msd(MsdModel {
                delta: hyper.delta,
                zeta,
                slot_word,
                transitions,
                trans_probs,
                assignments: Vec::new(),
            })
        }
        ModelType::Cusd => {
            let k = hyper
                .num_categories
                .ok_or_else(|| PersistError::Schema("missing num_categories".into()))?;
            let category_counts = file
                .counts
                .category
                .clone()
                .ok_or_else(|| PersistError::Schema("missing category counts".into()))?;
            if category_counts.len() != k {
                return Err(PersistError::Schema(format!(
                    "category counts must have {k} entries"
                )));
            }
            let rows = file
                .counts
                .category_slot
                .as_ref()
                .ok_or_else(|| PersistError::Schema("missing category-slot counts".into()))?;
            let category_slot = table_from_rows(rows, k, num_slots, "category-slot")?;
            ModelKind::Cusd(CusdModel {
                params: CusdParams {
                    delta: hyper.delta,
                    alpha: require(hyper.alpha, "alpha")?,
                    beta: require(hyper.beta, "beta")?,
                    num_categories: k,
                },
                slot_word,
                assignments: Vec::new(),
                category_counts,
                category_slot,
                categories: Vec::new(),
            })
        }
        ModelType::Cusdss => {
            let k = hyper
                .num_categories
                .ok_or_else(|| PersistError::Schema("missing num_categories".into()))?;
            let category_counts = file
                .counts
                .category
                .clone()
                .ok_or_else(|| PersistError::Schema("missing category counts".into()))?;
            if category_counts.len() != k {
                return Err(PersistError::Schema(format!(
                    "category counts must have {k} entries"
                )));
            }
            let rows = file.counts.category_slot_extended.as_ref().ok_or_else(|| {
                PersistError::Schema("missing extended category-slot counts".into())
            })?;
            let category_slot_ext = table_from_rows(rows, k, 2 * num_slots, "extended")?;
            ModelKind::Cusdss(CusdssModel {
                params: CusdssParams {
                    delta: hyper.delta,
                    alpha: require(hyper.alpha, "alpha")?,
                    beta: require(hyper.beta, "beta")?,
                    gamma: require(hyper.gamma, "gamma")?,
                    num_categories: k,
                },
                slot_word,
                category_counts,
                category_slot_ext,
                categories: Vec::new(),
                assignments: Vec::new(),
            })
        }
    };

    Ok(LoadedModel {
        registry,
        kind,
        seed: file.seed,
        iterations: file.iterations,
    })
}
