//! Fold-in of heldout documents, word probabilities, perplexity, synthetic
//! corpora and experiment sweeps.

mod synthetic;
mod sweep;

pub use synthetic::{generate_synthetic, DocLength, GroundTruth, SyntheticData, SyntheticSpec};
pub use sweep::{rows_to_csv, run_sweep, SweepCell, SweepGrid, SweepRow, SweepSettings, CSV_HEADER};

use rand::Rng as _;
use rayon::prelude::*;

use crate::concepts::ConceptIndex;
use crate::corpus::{split_document_words, Corpus};
use crate::error::{Error, Result};
use crate::model::{
    doc_distributions, ChainModel, DocCounts, DocDistributions, Hyperparameters, ModelConfig,
    PointEstimates, TrainedModel,
};
use crate::rng::{chain_seed, derive_seed, seeded};
use crate::sampler::{fill_weights, DocSide, Scratch, WordFactors};

pub const FOLDIN_SWEEPS: usize = 200;
pub const DEFAULT_FOLDIN_FRACTION: f64 = 0.5;

/// Document distributions of a folded-in document.
pub type FoldInResult = DocDistributions;

struct EstimateFactors<'a> {
    est: &'a PointEstimates,
    index: Option<&'a ConceptIndex>,
}

impl WordFactors for EstimateFactors<'_> {
    fn topic(&self, w: u32, t: usize) -> f64 {
        self.est.phi[t][w as usize]
    }

    fn concept(&self, c: usize, m: usize) -> f64 {
        let start = self.index.expect("concept factor needs an index").member_range(c).start;
        self.est.psi[c].probs[m - start]
    }
}

/// Estimates document distributions for `tokens` by collapsed Gibbs sampling
/// with the word distributions clamped to `est`.
///
/// Hyperparameters are taken as given and not re-optimized.
pub fn fold_in(
    est: &PointEstimates,
    hyper: &Hyperparameters,
    index: Option<&ConceptIndex>,
    tokens: &[u32],
    sweeps: usize,
    seed: u64,
) -> Result<FoldInResult> {
    let t = est.num_topics;
    let config = ModelConfig::new(est.kind, t, est.num_concepts());
    let hier = est.kind.is_hierarchical();
    let mut counts = DocCounts::new(&config, index);
    let alpha_sum = hyper.alpha_sum();
    let tau_sums = hyper.tau_sums(index);
    let words = EstimateFactors { est, index };
    let mut scratch = Scratch::new(t, est.num_concepts());
    let mut rng = seeded(seed);

    let mut z = Vec::with_capacity(tokens.len());
    for (i, &w) in tokens.iter().enumerate() {
        let candidates = index.map_or(0, |x| x.concepts_of(w).len());
        if t + candidates == 0 {
            return Err(Error::ZeroTotalWeight { doc: i, word: w });
        }
        let pick = rng.random_range(0..t + candidates);
        let k = if pick < t {
            pick
        } else {
            t + index.expect("candidates imply an index").concepts_of(w)[pick - t].0 as usize
        };
        counts.apply(k, t, index, hier, 1);
        z.push(k);
    }

    for _ in 0..sweeps {
        for (i, &w) in tokens.iter().enumerate() {
            counts.apply(z[i], t, index, hier, -1);
            let side = DocSide {
                kind: est.kind,
                num_topics: t,
                index,
                hyper,
                alpha_sum,
                tau_sums: &tau_sums,
                counts: &counts,
            };
            fill_weights(&mut scratch, &side, w, &words);
            z[i] = scratch.weights.draw(&mut rng).ok_or(Error::ZeroTotalWeight { doc: i, word: w })?;
            counts.apply(z[i], t, index, hier, 1);
        }
    }
    Ok(doc_distributions(est.kind, t, index, hyper, &counts))
}

/// Probability of the concept `c` exit event for every concept, conditional
/// on the concept route. Sums to one over concepts.
pub fn concept_marginals(est: &PointEstimates, index: &ConceptIndex, doc: &DocDistributions) -> Vec<f64> {
    let n = index.num_concepts();
    if !est.kind.is_hierarchical() {
        let part = &doc.theta[est.num_topics..];
        let total: f64 = part.iter().sum();
        return part.iter().map(|p| if total > 0.0 { p / total } else { 0.0 }).collect();
    }
    let mut marg = vec![0.0; n];
    let mut stack = vec![(index.root(), 1.0)];
    while let Some((c, reach)) = stack.pop() {
        marg[c] = reach * doc.zeta[index.exit_slot(c)];
        for &ch in index.children(c) {
            let slot = index.slot_from_parent(ch).expect("child has a parent slot");
            let r = reach * doc.zeta[slot];
            if r > 0.0 {
                stack.push((ch, r));
            }
        }
    }
    marg
}

/// Per-document word predictor: the model's mixture for one document.
#[derive(Debug, Clone)]
pub struct DocPredictor<'a> {
    est: &'a PointEstimates,
    index: Option<&'a ConceptIndex>,
    topic_weights: Vec<f64>,
    concept_weights: Vec<f64>,
}

impl<'a> DocPredictor<'a> {
    pub fn new(est: &'a PointEstimates, index: Option<&'a ConceptIndex>, doc: &DocDistributions) -> Self {
        let t = est.num_topics;
        let (topic_weights, concept_weights) = if est.kind.is_hierarchical() {
            let topic = doc.theta.iter().map(|p| doc.xi[0] * p).collect();
            let concept = match index {
                Some(idx) => concept_marginals(est, idx, doc).iter().map(|p| doc.xi[1] * p).collect(),
                None => Vec::new(),
            };
            (topic, concept)
        } else {
            (doc.theta[..t].to_vec(), doc.theta[t..].to_vec())
        };
        Self {
            est,
            index,
            topic_weights,
            concept_weights,
        }
    }

    /// Mixture weight of each topic in this document.
    pub fn topic_weights(&self) -> &[f64] {
        &self.topic_weights
    }

    /// Mixture weight of exiting at each concept in this document.
    pub fn concept_weights(&self) -> &[f64] {
        &self.concept_weights
    }

    /// Mixture term of component `z` for word `w`.
    pub fn component_term(&self, z: usize, w: u32) -> f64 {
        let t = self.est.num_topics;
        if z < t {
            self.topic_weights[z] * self.est.phi[z][w as usize]
        } else {
            self.concept_weights[z - t] * self.est.psi[z - t].prob(w)
        }
    }

    pub fn token_probability(&self, w: u32) -> f64 {
        let mut p: f64 = self
            .topic_weights
            .iter()
            .zip(&self.est.phi)
            .map(|(a, row)| a * row[w as usize])
            .sum();
        if let Some(idx) = self.index {
            for &(c, m) in idx.concepts_of(w) {
                let c = c as usize;
                let start = idx.member_range(c).start;
                p += self.concept_weights[c] * self.est.psi[c].probs[m as usize - start];
            }
        }
        p
    }

    pub fn log_likelihood(&self, tokens: &[u32]) -> f64 {
        tokens.iter().map(|&w| self.token_probability(w).ln()).sum()
    }
}

/// `ln((1/S) sum_s exp(l_s))`, computed with a max shift.
pub fn combine_chain_log_probs(log_ps: &[f64]) -> f64 {
    let max = log_ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = log_ps.iter().map(|l| (l - max).exp()).sum();
    max + sum.ln() - (log_ps.len() as f64).ln()
}

/// `exp(-log_likelihood / num_tokens)`.
pub fn perplexity(log_likelihood: f64, num_tokens: usize) -> f64 {
    (-log_likelihood / num_tokens as f64).exp()
}

/// Log likelihood of `eval_tokens` averaged in probability over chains,
/// each chain paired with its fold-in result.
pub fn doc_log_likelihood(
    chains: &[(&PointEstimates, &FoldInResult)],
    index: Option<&ConceptIndex>,
    eval_tokens: &[u32],
) -> f64 {
    let per_chain: Vec<f64> = chains
        .iter()
        .map(|(est, doc)| DocPredictor::new(est, index, doc).log_likelihood(eval_tokens))
        .collect();
    combine_chain_log_probs(&per_chain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub foldin_fraction: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            foldin_fraction: DEFAULT_FOLDIN_FRACTION,
            sweeps: FOLDIN_SWEEPS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocEvaluation {
    pub doc_id: String,
    pub log_likelihood: f64,
    pub num_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub perplexity: f64,
    pub log_likelihood: f64,
    pub num_tokens: usize,
    pub docs: Vec<DocEvaluation>,
}

/// Fold-in of one document on every chain. The seed of chain `s` for
/// document `d` is derived from `seed`, `s` and `d`.
pub fn fold_in_chains(
    chains: &[ChainModel],
    index: Option<&ConceptIndex>,
    tokens: &[u32],
    sweeps: usize,
    seed: u64,
    doc: usize,
) -> Result<Vec<FoldInResult>> {
    chains
        .iter()
        .enumerate()
        .map(|(s, ch)| {
            let sd = derive_seed(chain_seed(seed, s), doc as u64);
            fold_in(&ch.estimates, &ch.hyper, index, tokens, sweeps, sd)
        })
        .collect()
}

/// Heldout perplexity: each test document is split into fold-in and
/// evaluation words, folded in on every chain, and scored on its
/// evaluation words with the chain-averaged likelihood.
pub fn evaluate(model: &TrainedModel, test: &Corpus, opts: &EvalOptions) -> Result<Evaluation> {
    if !(0.0..=1.0).contains(&opts.foldin_fraction) {
        return Err(Error::InvalidFraction(opts.foldin_fraction));
    }
    let index = model.index.as_deref();
    let docs = test
        .documents
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let (fold, eval) = split_document_words(doc, opts.foldin_fraction, derive_seed(opts.seed, d as u64));
            let fits = fold_in_chains(&model.chains, index, &fold.tokens, opts.sweeps, opts.seed, d)?;
            let pairs: Vec<_> = model.chains.iter().map(|c| &c.estimates).zip(&fits).collect();
            let ll = if eval.tokens.is_empty() {
                0.0
            } else {
                doc_log_likelihood(&pairs, index, &eval.tokens)
            };
            Ok(DocEvaluation {
                doc_id: doc.id.clone(),
                log_likelihood: ll,
                num_tokens: eval.tokens.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_likelihood: f64 = docs.iter().map(|d| d.log_likelihood).sum();
    let num_tokens = docs.iter().map(|d| d.num_tokens).sum();
    Ok(Evaluation {
        perplexity: perplexity(log_likelihood, num_tokens),
        log_likelihood,
        num_tokens,
        docs,
    })
}
