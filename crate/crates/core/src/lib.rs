//! Distant-supervised slot filling for e-commerce search queries.
//!
//! Search logs pair each query with the characteristics (slots) of the
//! products the user engaged with. Those candidate slot-sets act as noisy
//! supervision for tagging individual query words with product
//! characteristics such as product-type, brand, gender, color, age and size.
//!
//! The crate provides four generative taggers trained by Gibbs sampling:
//!
//! * [`usd`] — every candidate slot equally likely per word.
//! * [`msd`] — first-order slot transitions, Viterbi decoding.
//! * [`cusd`] — candidate slot-sets drawn from latent product categories
//!   (mixture of unigrams).
//! * [`cusdss`] — category model plus Bernoulli subset selection, so only a
//!   subset of the candidates is treated as the real product intent.
//!
//! Supporting modules cover corpus ingestion and filtering ([`corpus`]),
//! candidate-set enumeration for unobserved inference ([`candidates`]),
//! BM25 and slot-match product ranking ([`ranking`]), tagging and retrieval
//! metrics ([`evalmetrics`]) and a planted-model corpus generator
//! ([`synthgen`]).

pub mod candidates;
pub mod corpus;
pub mod cusd;
pub mod cusdss;
pub mod dist;
pub mod error;
pub mod evalmetrics;
pub mod msd;
pub mod ranking;
pub mod synthgen;
pub mod usd;

pub use corpus::{
    CandidateSlotSet, Corpus, EngagementRecord, GoldAnnotation, KeyId, Query, SlotId,
    SlotRegistry, TermId,
};
pub use dist::{
    CategoryMixture, CountTable, DirichletPrior, RandomSource, SlotEmissions, SlotTransitions,
};
pub use error::{CoreError, Result};
