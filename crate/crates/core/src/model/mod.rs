//! Model configuration, assignment state and sufficient statistics.
//!
//! Components are numbered `0..T` for topics and `T + c` for concept `c`.
//! In hierarchical models the switch of a token is implied by its component
//! (topic route iff `z < T`) and its path is the unique root-to-concept path,
//! so `z` alone determines every count table.

mod estimates;
mod io;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng as _;

pub(crate) use estimates::doc_distributions;
pub use estimates::{point_estimates, ConceptWords, DocDistributions, PointEstimates};
pub use io::{load_model, save_model, ChainModel, TrainedModel, FORMAT_NAME, FORMAT_VERSION};

use crate::concepts::{ConceptHierarchy, ConceptIndex};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// Topic model (LDA).
    Tm,
    /// Concept model: concept-topic model without topics.
    Cm,
    /// Concept-topic model.
    Ctm,
    /// Hierarchical concept model: no topics.
    Hcm,
    /// Hierarchical concept-topic model.
    Hctm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Tm, Self::Cm, Self::Ctm, Self::Hcm, Self::Hctm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tm => "tm",
            Self::Cm => "cm",
            Self::Ctm => "ctm",
            Self::Hcm => "hcm",
            Self::Hctm => "hctm",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Self::Hcm | Self::Hctm)
    }

    pub fn uses_concepts(self) -> bool {
        !matches!(self, Self::Tm)
    }

    /// The variant used when a grid asks for `topics` topics: the concept-topic
    /// kinds collapse to their topic-free forms at zero topics.
    pub fn with_topics(self, topics: usize) -> Option<Self> {
        match (self, topics) {
            (Self::Tm, 0) => None,
            (Self::Ctm | Self::Cm, 0) => Some(Self::Cm),
            (Self::Ctm | Self::Cm, _) => Some(Self::Ctm),
            (Self::Hctm | Self::Hcm, 0) => Some(Self::Hcm),
            (Self::Hctm | Self::Hcm, _) => Some(Self::Hctm),
            (Self::Tm, _) => Some(Self::Tm),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tm" => Ok(Self::Tm),
            "cm" => Ok(Self::Cm),
            "ctm" => Ok(Self::Ctm),
            "hcm" => Ok(Self::Hcm),
            "hctm" => Ok(Self::Hctm),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_CHAINS: usize = 5;
pub const DEFAULT_BETA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_topics: usize,
    pub num_concepts: usize,
    pub iterations: usize,
    pub chains: usize,
    pub beta_phi: f64,
    pub beta_psi: f64,
    pub seed: u64,
    /// Apply one fixed-point hyperparameter step after every sweep.
    pub optimize_hyperparameters: bool,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, num_topics: usize, num_concepts: usize) -> Self {
        Self {
            kind,
            num_topics,
            num_concepts,
            iterations: DEFAULT_ITERATIONS,
            chains: DEFAULT_CHAINS,
            beta_phi: DEFAULT_BETA,
            beta_psi: DEFAULT_BETA,
            seed: 0,
            optimize_hyperparameters: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t, c) = (self.num_topics, self.num_concepts);
        let ok = match self.kind {
            ModelKind::Tm => t >= 1 && c == 0,
            ModelKind::Cm | ModelKind::Hcm => t == 0 && c >= 1,
            // zero concepts is accepted: the model then coincides with TM
            ModelKind::Ctm => t >= 1,
            ModelKind::Hctm => t >= 1 && c >= 1,
        };
        if !ok {
            return Err(Error::ConfigMismatch(format!(
                "model {} cannot have {t} topics and {c} concepts",
                self.kind
            )));
        }
        if self.chains == 0 {
            return Err(Error::ConfigMismatch("at least one chain is required".into()));
        }
        if !(self.beta_phi > 0.0 && self.beta_psi > 0.0) {
            return Err(Error::ConfigMismatch("word priors must be positive".into()));
        }
        Ok(())
    }

    /// Length of the document-level component vector `alpha`.
    pub fn num_alpha(&self) -> usize {
        if self.kind.is_hierarchical() {
            self.num_topics
        } else {
            self.num_topics + self.num_concepts
        }
    }
}

pub const INITIAL_ALPHA: f64 = 1.0;
pub const INITIAL_GAMMA: f64 = 1.0;
pub const INITIAL_TAU: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Document-component Dirichlet: `T` entries, or `T + C` for flat concept models.
    pub alpha: Vec<f64>,
    /// Switch Beta, `(topic route, concept route)`.
    pub gamma: [f64; 2],
    /// Per concept: one entry per child, then the exit. Empty for flat models.
    pub tau: Vec<Vec<f64>>,
}

impl Hyperparameters {
    pub fn initial(config: &ModelConfig, index: Option<&ConceptIndex>) -> Self {
        let tau = match (config.kind.is_hierarchical(), index) {
            (true, Some(idx)) => (0..idx.num_concepts())
                .map(|c| vec![INITIAL_TAU; idx.options(c).len()])
                .collect(),
            _ => Vec::new(),
        };
        Self {
            alpha: vec![INITIAL_ALPHA; config.num_alpha()],
            gamma: [INITIAL_GAMMA; 2],
            tau,
        }
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Sum of `tau[c]` over admissible options.
    pub(crate) fn tau_sums(&self, index: Option<&ConceptIndex>) -> Vec<f64> {
        match index {
            Some(idx) if !self.tau.is_empty() => (0..idx.num_concepts())
                .map(|c| {
                    let base = idx.options(c).start;
                    self.tau[c]
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| idx.is_admissible(base + k))
                        .map(|(_, v)| v)
                        .sum()
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Document-level counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocCounts {
    pub len: u32,
    /// Tokens per component: `T + C` entries for flat models, `T` for hierarchical ones.
    pub components: Vec<u32>,
    /// Tokens generated by `(topics, concepts)`.
    pub switch: [u32; 2],
    /// Hierarchical models: times each option slot was taken.
    pub options: Vec<u32>,
    /// Hierarchical models: times each concept was entered.
    pub visits: Vec<u32>,
}

impl DocCounts {
    pub fn new(config: &ModelConfig, index: Option<&ConceptIndex>) -> Self {
        let hier = config.kind.is_hierarchical();
        Self {
            len: 0,
            components: vec![0; config.num_alpha()],
            switch: [0; 2],
            options: match (hier, index) {
                (true, Some(idx)) => vec![0; idx.num_options()],
                _ => Vec::new(),
            },
            visits: match (hier, index) {
                (true, Some(idx)) => vec![0; idx.num_concepts()],
                _ => Vec::new(),
            },
        }
    }

    /// Adds (`delta = 1`) or removes (`delta = -1`) one token on component `z`.
    pub(crate) fn apply(&mut self, z: usize, num_topics: usize, index: Option<&ConceptIndex>, hier: bool, delta: i32) {
        let step = |v: &mut u32| *v = v.wrapping_add_signed(delta);
        step(&mut self.len);
        if z < num_topics {
            step(&mut self.switch[0]);
            step(&mut self.components[z]);
            return;
        }
        step(&mut self.switch[1]);
        let c = z - num_topics;
        if !hier {
            step(&mut self.components[z]);
            return;
        }
        let idx = index.expect("hierarchical counts need a concept index");
        let exit = idx.exit_slot(c);
        step(&mut self.options[exit]);
        step(&mut self.visits[c]);
        let mut cur = c;
        while let Some(p) = idx.parent(cur) {
            let slot = idx.slot_from_parent(cur).expect("non-root");
            step(&mut self.options[slot]);
            step(&mut self.visits[p]);
            cur = p;
        }
    }
}

/// Assignment state of one Gibbs chain plus all count tables.
#[derive(Debug, Clone)]
pub struct ModelState {
    config: ModelConfig,
    hyper: Hyperparameters,
    index: Option<Arc<ConceptIndex>>,
    vocab_size: usize,
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    /// `C_wt`, word-major: `w * T + t`.
    word_topic: Vec<u32>,
    topic_totals: Vec<u32>,
    /// `C_wc` over concept member slots.
    member_counts: Vec<u32>,
    concept_totals: Vec<u32>,
    doc_counts: Vec<DocCounts>,
    alpha_sum: f64,
    tau_sums: Vec<f64>,
}

impl ModelState {
    fn empty(
        corpus: &Corpus,
        config: &ModelConfig,
        index: Option<Arc<ConceptIndex>>,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        config.validate()?;
        let c = index.as_ref().map_or(0, |i| i.num_concepts());
        if config.kind.uses_concepts() && index.is_none() && config.num_concepts > 0 {
            return Err(Error::ConfigMismatch(format!("model {} needs a concept hierarchy", config.kind)));
        }
        if c != config.num_concepts {
            return Err(Error::ConfigMismatch(format!(
                "configured for {} concepts, hierarchy has {c}",
                config.num_concepts
            )));
        }
        if hyper.alpha.len() != config.num_alpha() {
            return Err(Error::ConfigMismatch(format!(
                "alpha has {} entries, expected {}",
                hyper.alpha.len(),
                config.num_alpha()
            )));
        }
        let v = corpus.vocabulary.len();
        if v == 0 {
            return Err(Error::EmptyVocabulary);
        }
        let idx = index.as_deref();
        let doc_counts = vec![DocCounts::new(config, idx); corpus.len()];
        let alpha_sum = hyper.alpha_sum();
        let tau_sums = hyper.tau_sums(idx);
        Ok(Self {
            config: config.clone(),
            vocab_size: v,
            docs: corpus.documents.iter().map(|d| d.tokens.clone()).collect(),
            z: corpus.documents.iter().map(|d| vec![0; d.len()]).collect(),
            word_topic: vec![0; v * config.num_topics],
            topic_totals: vec![0; config.num_topics],
            member_counts: vec![0; idx.map_or(0, |i| i.num_members())],
            concept_totals: vec![0; c],
            doc_counts,
            alpha_sum,
            tau_sums,
            hyper,
            index,
        })
    }

    fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        if self.config.num_topics > 0 {
            return Ok(());
        }
        let idx = self.index.as_deref().expect("concept-only model has an index");
        for doc in &self.docs {
            for &w in doc {
                if idx.concepts_of(w).is_empty() {
                    return Err(Error::UncoveredWord(corpus.vocabulary.word(w).to_string()));
                }
            }
        }
        Ok(())
    }

    /// Random initial state: every token takes a uniformly random component
    /// among those able to emit its word.
    pub fn init(
        corpus: &Corpus,
        config: &ModelConfig,
        index: Option<Arc<ConceptIndex>>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let hyper = Hyperparameters::initial(config, index.as_deref());
        let mut state = Self::empty(corpus, config, index, hyper)?;
        state.check_coverage(corpus)?;
        let t = config.num_topics;
        for d in 0..state.docs.len() {
            for i in 0..state.docs[d].len() {
                let w = state.docs[d][i];
                let candidates = state.index.as_ref().map_or(0, |x| x.concepts_of(w).len());
                let pick = rng.random_range(0..t + candidates);
                let z = if pick < t {
                    pick
                } else {
                    let idx = state.index.as_ref().expect("candidates imply an index");
                    t + idx.concepts_of(w)[pick - t].0 as usize
                };
                state.assign(d, i, z);
            }
        }
        Ok(state)
    }

    /// State with given assignments and hyperparameters.
    pub fn with_assignments(
        corpus: &Corpus,
        config: &ModelConfig,
        index: Option<Arc<ConceptIndex>>,
        hyper: Hyperparameters,
        z: &[Vec<u32>],
    ) -> Result<Self> {
        let mut state = Self::empty(corpus, config, index, hyper)?;
        if z.len() != state.docs.len() {
            return Err(Error::ConfigMismatch("assignment count differs from document count".into()));
        }
        for (d, zd) in z.iter().enumerate() {
            if zd.len() != state.docs[d].len() {
                return Err(Error::ConfigMismatch(format!("document {d}: assignment length mismatch")));
            }
            for (i, &k) in zd.iter().enumerate() {
                let w = state.docs[d][i];
                if !state.can_emit(k as usize, w) {
                    return Err(Error::ConfigMismatch(format!(
                        "component {k} cannot emit word {w} (document {d}, token {i})"
                    )));
                }
                state.assign(d, i, k as usize);
            }
        }
        Ok(state)
    }

    fn can_emit(&self, z: usize, w: u32) -> bool {
        let t = self.config.num_topics;
        if z < t {
            return true;
        }
        match &self.index {
            Some(idx) => z - t < idx.num_concepts() && idx.member_slot(z - t, w).is_some(),
            None => false,
        }
    }

    fn member_slot_of(&self, c: usize, w: u32) -> usize {
        let idx = self.index.as_ref().expect("concept assignment needs an index");
        idx.concepts_of(w)
            .iter()
            .find(|&&(cc, _)| cc as usize == c)
            .map(|&(_, m)| m as usize)
            .expect("word belongs to its assigned concept")
    }

    fn update_word_tables(&mut self, z: usize, w: u32, delta: i32) {
        let t = self.config.num_topics;
        let step = |v: &mut u32| *v = v.wrapping_add_signed(delta);
        if z < t {
            step(&mut self.word_topic[w as usize * t + z]);
            step(&mut self.topic_totals[z]);
        } else {
            let c = z - t;
            let m = self.member_slot_of(c, w);
            step(&mut self.member_counts[m]);
            step(&mut self.concept_totals[c]);
        }
    }

    /// Sets token `(d, i)` to component `z` and adds it to every count table.
    /// The token must not currently be counted.
    pub fn assign(&mut self, d: usize, i: usize, z: usize) {
        let w = self.docs[d][i];
        self.z[d][i] = z as u32;
        self.update_word_tables(z, w, 1);
        let hier = self.config.kind.is_hierarchical();
        self.doc_counts[d].apply(z, self.config.num_topics, self.index.as_deref(), hier, 1);
    }

    /// Removes token `(d, i)` from every count table and returns its component.
    pub fn remove(&mut self, d: usize, i: usize) -> usize {
        let w = self.docs[d][i];
        let z = self.z[d][i] as usize;
        self.update_word_tables(z, w, -1);
        let hier = self.config.kind.is_hierarchical();
        self.doc_counts[d].apply(z, self.config.num_topics, self.index.as_deref(), hier, -1);
        z
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn set_hyper(&mut self, hyper: Hyperparameters) {
        self.alpha_sum = hyper.alpha_sum();
        self.tau_sums = hyper.tau_sums(self.index.as_deref());
        self.hyper = hyper;
    }

    pub fn index(&self) -> Option<&ConceptIndex> {
        self.index.as_deref()
    }

    pub fn shared_index(&self) -> Option<Arc<ConceptIndex>> {
        self.index.clone()
    }

    pub fn num_topics(&self) -> usize {
        self.config.num_topics
    }

    pub fn num_concepts(&self) -> usize {
        self.config.num_concepts
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self, d: usize) -> &[u32] {
        &self.docs[d]
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    /// Switch bit of token `(d, i)`: 1 for the concept route.
    pub fn switch(&self, d: usize, i: usize) -> u8 {
        u8::from(self.z[d][i] as usize >= self.config.num_topics)
    }

    /// Concepts on the path of token `(d, i)`, root first; empty on the topic route.
    pub fn path(&self, d: usize, i: usize) -> Vec<usize> {
        let t = self.config.num_topics;
        let z = self.z[d][i] as usize;
        match (&self.index, z >= t) {
            (Some(idx), true) => idx.path(z - t),
            _ => Vec::new(),
        }
    }

    pub fn word_topic(&self, w: u32, t: usize) -> u32 {
        self.word_topic[w as usize * self.config.num_topics + t]
    }

    pub fn topic_total(&self, t: usize) -> u32 {
        self.topic_totals[t]
    }

    pub fn member_count(&self, slot: usize) -> u32 {
        self.member_counts[slot]
    }

    pub fn concept_total(&self, c: usize) -> u32 {
        self.concept_totals[c]
    }

    pub fn doc_counts(&self, d: usize) -> &DocCounts {
        &self.doc_counts[d]
    }

    /// Raw mutable access to one document's counts. Nothing is re-validated;
    /// intended for diagnostics and fault-injection tests.
    pub fn doc_counts_mut(&mut self, d: usize) -> &mut DocCounts {
        &mut self.doc_counts[d]
    }

    pub(crate) fn alpha_sum(&self) -> f64 {
        self.alpha_sum
    }

    pub(crate) fn tau_sums(&self) -> &[f64] {
        &self.tau_sums
    }

    /// Recomputes every count table from the assignments and lists each
    /// disagreement. An empty list means the state is consistent.
    pub fn check_counts(&self) -> Vec<String> {
        let mut findings = Vec::new();
        let t = self.config.num_topics;
        let idx = self.index.as_deref();
        let hier = self.config.kind.is_hierarchical();

        let mut word_topic = vec![0u32; self.word_topic.len()];
        let mut topic_totals = vec![0u32; t];
        let mut member_counts = vec![0u32; self.member_counts.len()];
        let mut concept_totals = vec![0u32; self.concept_totals.len()];
        for (d, (doc, zd)) in self.docs.iter().zip(&self.z).enumerate() {
            let mut fresh = DocCounts::new(&self.config, idx);
            for (i, (&w, &z)) in doc.iter().zip(zd).enumerate() {
                let z = z as usize;
                if !self.can_emit(z, w) {
                    findings.push(format!("token ({d},{i}): component {z} cannot emit word {w}"));
                    continue;
                }
                if z < t {
                    word_topic[w as usize * t + z] += 1;
                    topic_totals[z] += 1;
                } else {
                    let c = z - t;
                    let m = idx.and_then(|x| x.member_slot(c, w)).expect("checked by can_emit");
                    member_counts[m] += 1;
                    concept_totals[c] += 1;
                }
                fresh.apply(z, t, idx, hier, 1);
            }
            let stored = &self.doc_counts[d];
            if fresh.len != stored.len {
                findings.push(format!("N_d mismatch at d={d}: stored {} recount {}", stored.len, fresh.len));
            }
            for (k, (a, b)) in stored.components.iter().zip(&fresh.components).enumerate() {
                if a != b {
                    findings.push(format!("C_kd mismatch at (k={k},d={d}): stored {a} recount {b}"));
                }
            }
            for x in 0..2 {
                if stored.switch[x] != fresh.switch[x] {
                    findings.push(format!(
                        "N_{x}d mismatch at d={d}: stored {} recount {}",
                        stored.switch[x], fresh.switch[x]
                    ));
                }
            }
            for (s, (a, b)) in stored.options.iter().zip(&fresh.options).enumerate() {
                if a != b {
                    findings.push(format!("C_ckd mismatch at (slot={s},d={d}): stored {a} recount {b}"));
                }
            }
            for (c, (a, b)) in stored.visits.iter().zip(&fresh.visits).enumerate() {
                if a != b {
                    findings.push(format!("visit mismatch at (c={c},d={d}): stored {a} recount {b}"));
                }
            }
        }
        for (i, (a, b)) in self.word_topic.iter().zip(&word_topic).enumerate() {
            if a != b {
                findings.push(format!("C_wt mismatch at (w={},t={}): stored {a} recount {b}", i / t, i % t));
            }
        }
        for (k, (a, b)) in self.topic_totals.iter().zip(&topic_totals).enumerate() {
            if a != b {
                findings.push(format!("topic total mismatch at t={k}: stored {a} recount {b}"));
            }
        }
        for (m, (a, b)) in self.member_counts.iter().zip(&member_counts).enumerate() {
            if a != b {
                findings.push(format!("C_wc mismatch at member slot {m}: stored {a} recount {b}"));
            }
        }
        for (c, (a, b)) in self.concept_totals.iter().zip(&concept_totals).enumerate() {
            if a != b {
                findings.push(format!("concept total mismatch at c={c}: stored {a} recount {b}"));
            }
        }
        findings
    }
}

/// Builds the concept index (if any) and a random initial state seeded from
/// `config.seed`.
pub fn init_state(corpus: &Corpus, config: &ModelConfig, hierarchy: Option<&ConceptHierarchy>) -> Result<ModelState> {
    let index = concept_index(config, hierarchy, corpus.vocabulary.len())?;
    ModelState::init(corpus, config, index, &mut seeded(config.seed))
}

pub(crate) fn concept_index(
    config: &ModelConfig,
    hierarchy: Option<&ConceptHierarchy>,
    vocab_size: usize,
) -> Result<Option<Arc<ConceptIndex>>> {
    match hierarchy {
        Some(h) if config.num_concepts > 0 => Ok(Some(Arc::new(ConceptIndex::new(h, vocab_size)))),
        Some(_) => Ok(None),
        None if config.num_concepts > 0 => Err(Error::ConfigMismatch(format!(
            "model {} with {} concepts needs a hierarchy",
            config.kind, config.num_concepts
        ))),
        None => Ok(None),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::Vocabulary;

    pub(crate) fn toy_corpus() -> Corpus {
        Corpus::parse("d0\t\ta b c a\nd1\t\tb c c\nd2\t\ta\n", None).unwrap()
    }

    pub(crate) fn toy_hierarchy(v: &Vocabulary) -> ConceptHierarchy {
        ConceptHierarchy::parse("r\t-1\tRoot\t\nx\tr\tX\ta,b\ny\tr\tY\tc\nz\tx\tZ\tb\n", v)
            .unwrap()
            .propagated()
    }

    pub(crate) fn config_for(kind: ModelKind) -> ModelConfig {
        match kind {
            ModelKind::Tm => ModelConfig::new(kind, 2, 0),
            ModelKind::Cm | ModelKind::Hcm => ModelConfig::new(kind, 0, 4),
            ModelKind::Ctm | ModelKind::Hctm => ModelConfig::new(kind, 2, 4),
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(ModelKind::Tm, 0, 0).validate().is_err());
        assert!(ModelConfig::new(ModelKind::Tm, 3, 1).validate().is_err());
        assert!(ModelConfig::new(ModelKind::Cm, 1, 3).validate().is_err());
        assert!(ModelConfig::new(ModelKind::Hcm, 0, 0).validate().is_err());
        assert!(ModelConfig::new(ModelKind::Hctm, 2, 0).validate().is_err());
        assert!(ModelConfig::new(ModelKind::Ctm, 2, 0).validate().is_ok());
        for kind in ModelKind::ALL {
            assert!(config_for(kind).validate().is_ok());
        }
    }

    #[test]
    fn init_is_consistent_and_deterministic() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        for kind in ModelKind::ALL {
            let mut cfg = config_for(kind);
            cfg.seed = 9;
            let hier = kind.uses_concepts().then_some(&h);
            let a = init_state(&corpus, &cfg, hier).unwrap();
            assert!(a.check_counts().is_empty(), "{kind}: {:?}", a.check_counts());
            let b = init_state(&corpus, &cfg, hier).unwrap();
            assert_eq!(a.assignments(), b.assignments());
        }
    }

    #[test]
    fn concept_only_models_route_everything_to_concepts() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        for kind in [ModelKind::Cm, ModelKind::Hcm] {
            let s = init_state(&corpus, &config_for(kind), Some(&h)).unwrap();
            for d in 0..s.num_docs() {
                for i in 0..s.tokens(d).len() {
                    assert_eq!(s.switch(d, i), 1);
                }
            }
        }
    }

    #[test]
    fn hierarchical_flow_conservation() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        let s = init_state(&corpus, &config_for(ModelKind::Hcm), Some(&h)).unwrap();
        let idx = s.index().unwrap();
        for d in 0..s.num_docs() {
            let dc = s.doc_counts(d);
            assert_eq!(dc.visits[idx.root()], dc.switch[1]);
            for c in 0..idx.num_concepts() {
                let out: u32 = idx.options(c).map(|k| dc.options[k]).sum();
                assert_eq!(out, dc.visits[c]);
                if let Some(slot) = idx.slot_from_parent(c) {
                    assert_eq!(dc.options[slot], dc.visits[c]);
                }
            }
        }
    }

    #[test]
    fn injected_fault_yields_one_finding() {
        let corpus = toy_corpus();
        let mut s = init_state(&corpus, &config_for(ModelKind::Tm), None).unwrap();
        s.doc_counts_mut(1).components[0] += 1;
        let f = s.check_counts();
        assert_eq!(f.len(), 1, "{f:?}");
        assert!(f[0].contains("k=0,d=1"), "{}", f[0]);
    }

    #[test]
    fn uncovered_word_rejected_for_concept_only_models() {
        let corpus = Corpus::parse("d\t\ta q\n", None).unwrap();
        let h = ConceptHierarchy::parse("r\t-1\tR\ta\n", &corpus.vocabulary).unwrap();
        let err = init_state(&corpus, &ModelConfig::new(ModelKind::Cm, 0, 1), Some(&h)).unwrap_err();
        assert!(matches!(err, Error::UncoveredWord(w) if w == "q"));
        assert!(init_state(&corpus, &ModelConfig::new(ModelKind::Ctm, 1, 1), Some(&h)).is_ok());
    }

    #[test]
    fn with_assignments_rejects_impossible_component() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        let cfg = config_for(ModelKind::Ctm);
        let index = concept_index(&cfg, Some(&h), 3).unwrap();
        let hyper = Hyperparameters::initial(&cfg, index.as_deref());
        // concept y (index 2 -> component 4) does not contain word a
        let z = vec![vec![4, 0, 0, 0], vec![0, 0, 0], vec![0]];
        assert!(ModelState::with_assignments(&corpus, &cfg, index, hyper, &z).is_err());
    }
}
