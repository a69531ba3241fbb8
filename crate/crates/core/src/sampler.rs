//! Collapsed Gibbs sampling for every model kind.
//!
//! Conditionals are evaluated on the current counts; callers remove the
//! token being resampled first. The same weight kernel serves training
//! (word factors from counts) and fold-in (word factors from fixed estimates).

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::concepts::{ConceptHierarchy, ConceptIndex};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::hyperopt;
use crate::model::{
    concept_index, point_estimates, ChainModel, DocCounts, Hyperparameters, ModelConfig, ModelKind, ModelState,
    TrainedModel,
};
use crate::rng::{chain_seed, seeded, Rng};

/// Unnormalized weights of one token's admissible components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenWeights {
    pub topic_weights: Vec<f64>,
    /// `(concept, weight)` for the concepts containing the word.
    pub concept_weights: Vec<(usize, f64)>,
}

impl TokenWeights {
    pub fn total(&self) -> f64 {
        self.topic_weights.iter().sum::<f64>() + self.concept_weights.iter().map(|&(_, w)| w).sum::<f64>()
    }

    /// Weight of component `z` (`T + c` for concept `c`); zero when absent.
    pub fn weight(&self, z: usize) -> f64 {
        let t = self.topic_weights.len();
        if z < t {
            self.topic_weights[z]
        } else {
            self.concept_weights
                .iter()
                .find(|&&(c, _)| c == z - t)
                .map_or(0.0, |&(_, w)| w)
        }
    }

    /// Draws a component proportionally to the weights.
    pub(crate) fn draw(&self, rng: &mut Rng) -> Option<usize> {
        let total = self.total();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let t = self.topic_weights.len();
        let mut last = None;
        for (k, &w) in self.topic_weights.iter().enumerate() {
            if w > 0.0 {
                last = Some(k);
                if u < w {
                    return last;
                }
                u -= w;
            }
        }
        for &(c, w) in &self.concept_weights {
            if w > 0.0 {
                last = Some(t + c);
                if u < w {
                    return last;
                }
                u -= w;
            }
        }
        // rounding left `u` marginally above the last positive weight
        last
    }
}

/// Word-emission factors: from counts while training, from estimates in fold-in.
pub(crate) trait WordFactors {
    fn topic(&self, w: u32, t: usize) -> f64;
    /// `m` is the global member slot of `w` in concept `c`.
    fn concept(&self, c: usize, m: usize) -> f64;
}

struct CountFactors<'a> {
    state: &'a ModelState,
    v_beta: f64,
}

impl<'a> CountFactors<'a> {
    fn new(state: &'a ModelState) -> Self {
        Self {
            state,
            v_beta: state.vocab_size() as f64 * state.config().beta_phi,
        }
    }
}

impl WordFactors for CountFactors<'_> {
    fn topic(&self, w: u32, t: usize) -> f64 {
        let s = self.state;
        (s.word_topic(w, t) as f64 + s.config().beta_phi) / (s.topic_total(t) as f64 + self.v_beta)
    }

    fn concept(&self, c: usize, m: usize) -> f64 {
        let s = self.state;
        let b = s.config().beta_psi;
        let size = s.index().map_or(0, |i| i.concept_size(c)) as f64;
        (s.member_count(m) as f64 + b) / (s.concept_total(c) as f64 + size * b)
    }
}

/// Document-side inputs of the conditional.
pub(crate) struct DocSide<'a> {
    pub kind: ModelKind,
    pub num_topics: usize,
    pub index: Option<&'a ConceptIndex>,
    pub hyper: &'a Hyperparameters,
    pub alpha_sum: f64,
    pub tau_sums: &'a [f64],
    pub counts: &'a DocCounts,
}

/// Reusable buffers for the weight kernel.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    pub weights: TokenWeights,
    reach: Vec<f64>,
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<usize>,
}

impl Scratch {
    pub fn new(num_topics: usize, num_concepts: usize) -> Self {
        Self {
            weights: TokenWeights {
                topic_weights: vec![0.0; num_topics],
                concept_weights: Vec::new(),
            },
            reach: vec![0.0; num_concepts],
            stamp: vec![0; num_concepts],
            epoch: 0,
            stack: Vec::new(),
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Product of child-edge probabilities from the root down to `c`.
    fn reach(&mut self, c: usize, doc: &DocSide<'_>, idx: &ConceptIndex) -> f64 {
        let epoch = self.epoch;
        self.stack.clear();
        let mut cur = c;
        let mut acc = loop {
            if self.stamp[cur] == epoch {
                break self.reach[cur];
            }
            match idx.parent(cur) {
                None => {
                    self.stamp[cur] = epoch;
                    self.reach[cur] = 1.0;
                    break 1.0;
                }
                Some(p) => {
                    self.stack.push(cur);
                    cur = p;
                }
            }
        };
        while let Some(node) = self.stack.pop() {
            let p = idx.parent(node).expect("non-root on stack");
            let slot = idx.slot_from_parent(node).expect("non-root on stack");
            let base = idx.options(p).start;
            acc *= (doc.counts.options[slot] as f64 + doc.hyper.tau[p][slot - base])
                / (doc.counts.visits[p] as f64 + doc.tau_sums[p]);
            self.stamp[node] = epoch;
            self.reach[node] = acc;
        }
        acc
    }
}

/// Fills `scratch.weights` with the conditional of word `w`.
pub(crate) fn fill_weights(scratch: &mut Scratch, doc: &DocSide<'_>, w: u32, words: &impl WordFactors) {
    let t = doc.num_topics;
    let counts = doc.counts;
    let hyper = doc.hyper;
    let hier = doc.kind.is_hierarchical();

    let topic_scale = if hier && t > 0 {
        let n0 = counts.switch[0] as f64;
        (n0 + hyper.gamma[0]) / (n0 + doc.alpha_sum)
    } else {
        1.0
    };
    let tw = &mut scratch.weights.topic_weights;
    tw.resize(t, 0.0);
    for (k, out) in tw.iter_mut().enumerate() {
        *out = topic_scale * (counts.components[k] as f64 + hyper.alpha[k]) * words.topic(w, k);
    }

    scratch.weights.concept_weights.clear();
    let Some(idx) = doc.index else { return };
    if !hier {
        for &(c, m) in idx.concepts_of(w) {
            let (c, m) = (c as usize, m as usize);
            let wgt = (counts.components[t + c] as f64 + hyper.alpha[t + c]) * words.concept(c, m);
            scratch.weights.concept_weights.push((c, wgt));
        }
        return;
    }
    let route = counts.switch[1] as f64 + hyper.gamma[1];
    scratch.next_epoch();
    for &(c, m) in idx.concepts_of(w) {
        let (c, m) = (c as usize, m as usize);
        let exit = idx.exit_slot(c);
        let exit_p = (counts.options[exit] as f64 + hyper.tau[c][exit - idx.options(c).start])
            / (counts.visits[c] as f64 + doc.tau_sums[c]);
        let wgt = route * scratch.reach(c, doc, idx) * exit_p * words.concept(c, m);
        scratch.weights.concept_weights.push((c, wgt));
    }
}

fn doc_side<'a>(state: &'a ModelState, d: usize) -> DocSide<'a> {
    DocSide {
        kind: state.config().kind,
        num_topics: state.num_topics(),
        index: state.index(),
        hyper: state.hyper(),
        alpha_sum: state.alpha_sum(),
        tau_sums: state.tau_sums(),
        counts: state.doc_counts(d),
    }
}

/// Conditional weights of word `w` in document `d` for the state's model kind.
/// The token being resampled must already be removed from the counts.
pub fn conditional(state: &ModelState, d: usize, w: u32) -> TokenWeights {
    let mut scratch = Scratch::new(state.num_topics(), state.num_concepts());
    fill_weights(&mut scratch, &doc_side(state, d), w, &CountFactors::new(state));
    scratch.weights
}

/// Topic-model conditional: `(C_td + alpha_t) (C_wt + beta) / (n_t + V beta)`.
/// On a concept-topic state only the topic part is returned.
pub fn conditional_tm(state: &ModelState, d: usize, w: u32) -> TokenWeights {
    let words = CountFactors::new(state);
    let counts = state.doc_counts(d);
    let alpha = &state.hyper().alpha;
    TokenWeights {
        topic_weights: (0..state.num_topics())
            .map(|t| (counts.components[t] as f64 + alpha[t]) * words.topic(w, t))
            .collect(),
        concept_weights: Vec::new(),
    }
}

/// Flat concept-topic conditional over `T + C` components.
pub fn conditional_ctm(state: &ModelState, d: usize, w: u32) -> TokenWeights {
    assert!(!state.config().kind.is_hierarchical(), "flat conditional on a hierarchical state");
    conditional(state, d, w)
}

/// Hierarchical conditional: switch, path product and word factor.
pub fn conditional_hctm(state: &ModelState, d: usize, w: u32) -> TokenWeights {
    assert!(state.config().kind.is_hierarchical(), "hierarchical conditional on a flat state");
    conditional(state, d, w)
}

/// Per-chain sampler holding reusable buffers.
#[derive(Debug)]
pub struct Sampler {
    scratch: Scratch,
}

impl Sampler {
    pub fn new(state: &ModelState) -> Self {
        Self {
            scratch: Scratch::new(state.num_topics(), state.num_concepts()),
        }
    }

    /// Resamples token `(d, i)` and returns its new component.
    pub fn resample_token(&mut self, state: &mut ModelState, d: usize, i: usize, rng: &mut Rng) -> Result<usize> {
        let w = state.tokens(d)[i];
        state.remove(d, i);
        fill_weights(&mut self.scratch, &doc_side(state, d), w, &CountFactors::new(state));
        let z = self
            .scratch
            .weights
            .draw(rng)
            .ok_or(Error::ZeroTotalWeight { doc: d, word: w })?;
        state.assign(d, i, z);
        Ok(z)
    }

    /// Resamples every token once in corpus order. Hyperparameters are not touched.
    pub fn sweep_tokens(&mut self, state: &mut ModelState, rng: &mut Rng) -> Result<()> {
        for d in 0..state.num_docs() {
            for i in 0..state.tokens(d).len() {
                self.resample_token(state, d, i, rng)?;
            }
        }
        Ok(())
    }

    /// One Gibbs sweep followed, if configured, by one hyperparameter step.
    pub fn sweep(&mut self, state: &mut ModelState, rng: &mut Rng) -> Result<()> {
        self.sweep_tokens(state, rng)?;
        if state.config().optimize_hyperparameters {
            let hyper = hyperopt::update_all(state);
            state.set_hyper(hyper);
        }
        Ok(())
    }
}

/// Convenience wrapper around [`Sampler::sweep`].
pub fn sweep(state: &mut ModelState, rng: &mut Rng) -> Result<()> {
    Sampler::new(state).sweep(state, rng)
}

/// Runs one chain from a fresh random state and returns the final state.
///
/// `observe` is called after every sweep with the 1-based iteration number.
pub fn run_chain_with(
    corpus: &Corpus,
    config: &ModelConfig,
    index: Option<Arc<ConceptIndex>>,
    seed: u64,
    mut observe: impl FnMut(usize, &ModelState),
) -> Result<ModelState> {
    let mut rng = seeded(seed);
    let mut state = ModelState::init(corpus, config, index, &mut rng)?;
    let mut sampler = Sampler::new(&state);
    for it in 1..=config.iterations {
        sampler.sweep(&mut state, &mut rng)?;
        observe(it, &state);
    }
    Ok(state)
}

/// Runs chain `chain` of `config` and returns its point estimates and
/// final hyperparameters.
pub fn run_chain(
    corpus: &Corpus,
    config: &ModelConfig,
    index: Option<Arc<ConceptIndex>>,
    chain: usize,
) -> Result<ChainModel> {
    let state = run_chain_with(corpus, config, index, chain_seed(config.seed, chain), |_, _| {})?;
    Ok(ChainModel {
        estimates: point_estimates(&state),
        hyper: state.hyper().clone(),
    })
}

/// Trains `config.chains` independent chains in parallel.
pub fn train(corpus: &Corpus, config: &ModelConfig, hierarchy: Option<&ConceptHierarchy>) -> Result<TrainedModel> {
    config.validate()?;
    let index = concept_index(config, hierarchy, corpus.vocabulary.len())?;
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|s| run_chain(corpus, config, index.clone(), s))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedModel {
        config: config.clone(),
        vocabulary: corpus.vocabulary.clone(),
        hierarchy: index.as_ref().and(hierarchy.cloned()),
        index,
        chains,
    })
}

/// Perplexity of the training tokens under the state's own point estimates.
pub fn training_perplexity(state: &ModelState) -> f64 {
    let est = point_estimates(state);
    let mut log_lik = 0.0;
    for d in 0..state.num_docs() {
        let doc = &est.docs[d];
        let marg = crate::eval::DocPredictor::new(&est, state.index(), doc);
        for &w in state.tokens(d) {
            log_lik += marg.token_probability(w).ln();
        }
    }
    (-log_lik / state.num_tokens().max(1) as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{config_for, toy_corpus, toy_hierarchy};
    use crate::model::init_state;

    fn state_with(kind: ModelKind, t: usize, c: usize, text: &str, tree: Option<&str>, z: &[Vec<u32>]) -> ModelState {
        let corpus = Corpus::parse(text, None).unwrap();
        let h = tree.map(|tr| ConceptHierarchy::parse(tr, &corpus.vocabulary).unwrap().propagated());
        let cfg = ModelConfig::new(kind, t, c);
        let index = concept_index(&cfg, h.as_ref(), corpus.vocabulary.len()).unwrap();
        let hyper = Hyperparameters::initial(&cfg, index.as_deref());
        ModelState::with_assignments(&corpus, &cfg, index, hyper, z).unwrap()
    }

    #[test]
    fn tm_weight_by_hand() {
        // doc 0 counts (2, 1); topic 0 column over (a, b, c) is (2, 1, 0)
        let s = state_with(ModelKind::Tm, 2, 0, "d\t\ta b c\ne\t\ta\n", None, &[vec![0, 0, 1], vec![0]]);
        let got = conditional_tm(&s, 0, 0).topic_weights[0];
        assert!((got - 3.0 * 2.01 / 3.03).abs() < 1e-12, "{got}");
        assert!((got - 1.990099).abs() < 1e-6);
    }

    #[test]
    fn single_topic_draw_is_deterministic() {
        let mut s = state_with(ModelKind::Tm, 1, 0, "d\t\ta b c\n", None, &[vec![0, 0, 0]]);
        let mut rng = seeded(3);
        let mut sampler = Sampler::new(&s);
        assert_eq!(sampler.resample_token(&mut s, 0, 1, &mut rng).unwrap(), 0);
        assert_eq!(conditional_tm(&s, 0, 0).topic_weights.len(), 1);
    }

    #[test]
    fn tm_zero_counts_proportional_to_alpha() {
        let corpus = Corpus::parse("d\t\ta b c\n", None).unwrap();
        let cfg = ModelConfig::new(ModelKind::Tm, 3, 0);
        let mut hyper = Hyperparameters::initial(&cfg, None);
        hyper.alpha = vec![0.5, 1.0, 2.0];
        let mut empty = corpus.clone();
        empty.documents[0].tokens.clear();
        let s = ModelState::with_assignments(&empty, &cfg, None, hyper, &[vec![]]).unwrap();
        let w = conditional_tm(&s, 0, 1);
        for (k, a) in [0.5, 1.0, 2.0].iter().enumerate() {
            assert!((w.topic_weights[k] - a / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ctm_concept_weight_matches_worked_value() {
        // Hand-built counts: C_cd = 1 but the concept's word counts are zero.
        let mut s = state_with(ModelKind::Ctm, 1, 1, "d\t\ta\ne\t\tb c\n", Some("r\t-1\tR\ta,b,c\n"), &[vec![0], vec![0, 0]]);
        s.remove(0, 0);
        s.doc_counts_mut(0).components[1] = 1;
        let w = conditional_ctm(&s, 0, 0);
        assert!((w.weight(1) - 2.0 * (0.01 / 0.03)).abs() < 1e-12);
        assert!((w.weight(1) - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn ctm_word_outside_concept_has_no_weight() {
        let s = state_with(ModelKind::Ctm, 1, 1, "d\t\ta q\n", Some("r\t-1\tR\ta\n"), &[vec![1, 0]]);
        let q = 1;
        let w = conditional_ctm(&s, 0, q);
        assert!(w.concept_weights.is_empty());
        assert_eq!(w.weight(1), 0.0);
    }

    #[test]
    fn hctm_topic_case_by_hand() {
        // N_0d = 3 with doc counts (2, 1); topic 0 column (2, 1, 0); gamma_0 = 0.5
        let mut s = state_with(
            ModelKind::Hctm,
            2,
            1,
            "d\t\ta b c\ne\t\ta\n",
            Some("r\t-1\tR\ta,b,c\n"),
            &[vec![0, 0, 1], vec![0]],
        );
        let mut h = s.hyper().clone();
        h.gamma = [0.5, 0.5];
        s.set_hyper(h);
        let got = conditional_hctm(&s, 0, 0).topic_weights[0];
        assert!((got - 3.5 * 3.0 / 5.0 * 2.01 / 3.03).abs() < 1e-12, "{got}");
        assert!((got - 1.3931).abs() < 1e-4);
    }

    #[test]
    fn hctm_root_only_concept_case_by_hand() {
        // N_1d = 2 on the root, zero concept word counts, gamma_1 = 0.5
        let mut e = state_with(ModelKind::Hctm, 1, 1, "d\t\ta\ne\t\tb c\n", Some("r\t-1\tR\ta,b,c\n"), &[vec![0], vec![0, 0]]);
        e.remove(0, 0);
        let mut h = e.hyper().clone();
        h.gamma = [0.5, 0.5];
        e.set_hyper(h);
        let dc = e.doc_counts_mut(0);
        dc.switch[1] = 2;
        dc.visits[0] = 2;
        dc.options[0] = 2;
        let w = conditional_hctm(&e, 0, 0);
        assert!((w.weight(1) - 2.5 / 3.0).abs() < 1e-12);
        assert!((w.weight(1) - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn hctm_path_product_walks_every_edge() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        let mut s = init_state(&corpus, &config_for(ModelKind::Hctm), Some(&h)).unwrap();
        let w = s.tokens(0)[1]; // `b`
        s.remove(0, 1);
        let weights = conditional_hctm(&s, 0, w);
        let idx = s.index().unwrap();
        let dc = s.doc_counts(0);
        let hy = s.hyper();
        let tau_sum = |c: usize| -> f64 {
            idx.options(c)
                .filter(|&k| idx.is_admissible(k))
                .map(|k| hy.tau[c][k - idx.options(c).start])
                .sum()
        };
        let edge = |slot: usize, p: usize| {
            (dc.options[slot] as f64 + hy.tau[p][slot - idx.options(p).start]) / (dc.visits[p] as f64 + tau_sum(p))
        };
        for &(c, _) in idx.concepts_of(w) {
            let c = c as usize;
            let path = idx.path(c);
            let mut prod = 1.0;
            for pair in path.windows(2) {
                prod *= edge(idx.slot_from_parent(pair[1]).unwrap(), pair[0]);
            }
            prod *= edge(idx.exit_slot(c), c);
            let m = idx.member_slot(c, w).unwrap();
            let word = (s.member_count(m) as f64 + 0.01) / (s.concept_total(c) as f64 + idx.concept_size(c) as f64 * 0.01);
            let want = (dc.switch[1] as f64 + hy.gamma[1]) * prod * word;
            assert!((weights.weight(2 + c) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn word_in_no_concept_falls_to_topics() {
        let mut s = state_with(ModelKind::Hctm, 2, 1, "d\t\ta q q\n", Some("r\t-1\tR\ta\n"), &[vec![2, 0, 1]]);
        s.remove(0, 1);
        let w = conditional_hctm(&s, 0, 1);
        assert!(w.concept_weights.is_empty());
        assert!(w.topic_weights.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn forced_single_component() {
        let mut s = state_with(ModelKind::Cm, 0, 1, "d\t\ta b\n", Some("r\t-1\tR\ta,b\n"), &[vec![0, 0]]);
        let mut rng = seeded(1);
        let mut sampler = Sampler::new(&s);
        for _ in 0..10 {
            assert_eq!(sampler.resample_token(&mut s, 0, 0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn sweeps_keep_counts_consistent_and_are_deterministic() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        for kind in ModelKind::ALL {
            let mut cfg = config_for(kind);
            cfg.iterations = 10;
            let hier = kind.uses_concepts().then_some(&h);
            let index = concept_index(&cfg, hier, corpus.vocabulary.len()).unwrap();
            let mut checked = 0;
            let a = run_chain_with(&corpus, &cfg, index.clone(), 5, |_, s| {
                assert!(s.check_counts().is_empty(), "{kind}: {:?}", s.check_counts());
                checked += 1;
            })
            .unwrap();
            assert_eq!(checked, 10);
            let b = run_chain_with(&corpus, &cfg, index, 5, |_, _| {}).unwrap();
            assert_eq!(a.assignments(), b.assignments());
            assert_eq!(a.hyper(), b.hyper());
        }
    }

    #[test]
    fn train_runs_all_chains() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        let mut cfg = config_for(ModelKind::Hctm);
        cfg.iterations = 5;
        cfg.chains = 3;
        let m = train(&corpus, &cfg, Some(&h)).unwrap();
        assert_eq!(m.chains.len(), 3);
        assert!(m.hierarchy.is_some());
        let again = train(&corpus, &cfg, Some(&h)).unwrap();
        assert_eq!(m.chains, again.chains);
    }
}
