//! Topic models (TM), concept-topic models (CM, CTM) and hierarchical
//! concept-topic models (HCM, HCTM) trained with collapsed Gibbs sampling.
//!
//! Typical flow: read a [`corpus::Corpus`] and a [`concepts::ConceptHierarchy`],
//! call [`sampler::train`], then evaluate heldout perplexity with
//! [`eval::evaluate`] or produce tagging and concept reports with [`report`].

pub mod concepts;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod hyperopt;
pub mod model;
pub mod report;
pub mod rng;
pub mod sampler;

pub use concepts::{ConceptHierarchy, ConceptIndex, Finding, Severity};
pub use corpus::{Corpus, Document, Vocabulary, VocabularyMode};
pub use error::{Error, Result};
pub use model::{
    Hyperparameters, ModelConfig, ModelKind, ModelState, PointEstimates, TrainedModel,
};
