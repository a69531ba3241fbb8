//! Forward sampling of the hierarchical concept-topic generative process.
//!
//! Topic-only corpora come from `gamma` forcing the topic route; concept-only
//! corpora from `topics = 0`.

use std::collections::BTreeSet;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::concepts::{ConceptHierarchy, ConceptIndex};
use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ConceptWords, DocDistributions};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DocLength {
    Fixed(usize),
    /// Poisson with the given mean, at least one token.
    Poisson(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub vocab_size: usize,
    pub topics: usize,
    /// Children per interior node.
    pub branching: usize,
    /// Depth of the deepest level (root is depth 0).
    pub depth: usize,
    pub doc_length: DocLength,
    /// Symmetric document-topic Dirichlet.
    pub alpha: f64,
    /// Switch Beta `(topic route, concept route)`.
    pub gamma: [f64; 2],
    /// Symmetric Dirichlet over every concept's children and exit.
    pub tau: f64,
    /// Symmetric Dirichlet used to draw each topic over the vocabulary.
    pub topic_beta: f64,
    /// Symmetric Dirichlet used to draw each concept over its member words.
    pub concept_beta: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            docs: 1100,
            vocab_size: 1000,
            topics: 10,
            branching: 3,
            depth: 3,
            doc_length: DocLength::Poisson(50.0),
            alpha: 0.5,
            gamma: Self::switch_prior(0.6, 10.0),
            tau: 0.5,
            topic_beta: 0.1,
            concept_beta: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Beta parameters with mean concept-route probability `fraction`.
    pub fn switch_prior(fraction: f64, strength: f64) -> [f64; 2] {
        [strength * (1.0 - fraction), strength * fraction]
    }

    pub fn num_concepts(&self) -> usize {
        (0..=self.depth).map(|l| self.branching.pow(l as u32)).sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigMismatch(format!("synthetic spec: {m}")));
        if self.vocab_size == 0 {
            return bad("vocabulary size must be positive");
        }
        if self.vocab_size < self.num_concepts() {
            return bad("every concept needs at least one word of its own");
        }
        if self.depth > 0 && self.branching == 0 {
            return bad("branching must be positive below the root");
        }
        let positive = [self.alpha, self.gamma[0], self.gamma[1], self.tau, self.topic_beta, self.concept_beta];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return bad("all priors must be positive");
        }
        if let DocLength::Poisson(m) = self.doc_length {
            if m.is_nan() || m <= 0.0 {
                return bad("mean document length must be positive");
            }
        }
        Ok(())
    }
}

/// Every latent draw behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `phi[t][w]`.
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<ConceptWords>,
    /// Per document `xi`, `theta` over topics and `zeta` over option slots.
    pub docs: Vec<DocDistributions>,
    /// Component of every token, `T + c` for concept `c`.
    pub assignments: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    /// Propagated hierarchy.
    pub hierarchy: ConceptHierarchy,
    pub truth: GroundTruth,
}

fn dirichlet(rng: &mut Rng, params: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = params
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    } else {
        // every gamma draw underflowed: all mass on one component
        let k = rng.random_range(0..out.len());
        out.iter_mut().enumerate().for_each(|(i, x)| *x = f64::from(i == k));
    }
    out
}

fn categorical(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn build_hierarchy(spec: &SyntheticSpec, rng: &mut Rng) -> (Vocabulary, ConceptHierarchy) {
    let width = spec.vocab_size.to_string().len();
    let vocab = Vocabulary::from_words((0..spec.vocab_size).map(|i| format!("w{i:0width$}")));

    let mut ids = vec!["n0".to_string()];
    let mut parents = vec![None];
    let mut frontier = vec![0usize];
    for _ in 0..spec.depth {
        let mut next = Vec::new();
        for &p in &frontier {
            for k in 0..spec.branching {
                ids.push(format!("{}.{k}", ids[p]));
                parents.push(Some(p));
                next.push(ids.len() - 1);
            }
        }
        frontier = next;
    }
    let n = ids.len();
    let mut own = vec![BTreeSet::new(); n];
    for w in 0..spec.vocab_size {
        let c = if w < n { w } else { rng.random_range(0..n) };
        own[c].insert(w as u32);
    }
    let names = (0..n).map(|c| format!("concept-{c}")).collect();
    let mut h = ConceptHierarchy::from_parts(ids, names, parents, own).expect("generated tree is valid");
    h.propagate_words_upward();
    (vocab, h)
}

/// Samples a corpus from the generative process described by `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let (vocab, hierarchy) = build_hierarchy(spec, &mut rng);
    let index = ConceptIndex::new(&hierarchy, vocab.len());
    let t = spec.topics;
    let c_count = index.num_concepts();

    let phi: Vec<Vec<f64>> = (0..t)
        .map(|_| dirichlet(&mut rng, &vec![spec.topic_beta; spec.vocab_size]))
        .collect();
    let psi: Vec<ConceptWords> = (0..c_count)
        .map(|c| ConceptWords {
            words: index.members(c).to_vec(),
            probs: dirichlet(&mut rng, &vec![spec.concept_beta; index.concept_size(c)]),
        })
        .collect();

    let poisson = match spec.doc_length {
        DocLength::Poisson(m) => Some(Poisson::new(m).expect("positive mean")),
        DocLength::Fixed(_) => None,
    };
    let mut documents = Vec::with_capacity(spec.docs);
    let mut docs = Vec::with_capacity(spec.docs);
    let mut assignments = Vec::with_capacity(spec.docs);
    let width = spec.docs.to_string().len();
    for d in 0..spec.docs {
        let xi = if t == 0 {
            [0.0, 1.0]
        } else {
            let x = dirichlet(&mut rng, &spec.gamma);
            [x[0], x[1]]
        };
        let theta = if t > 0 { dirichlet(&mut rng, &vec![spec.alpha; t]) } else { Vec::new() };
        let mut zeta = vec![0.0; index.num_options()];
        for c in 0..c_count {
            let opts = index.options(c);
            let draw = dirichlet(&mut rng, &vec![spec.tau; opts.len()]);
            zeta[opts].copy_from_slice(&draw);
        }
        let n = match (spec.doc_length, &poisson) {
            (DocLength::Fixed(n), _) => n,
            (_, Some(p)) => (p.sample(&mut rng) as usize).max(1),
            _ => unreachable!(),
        };
        let mut tokens = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let concept_route = t == 0 || rng.random::<f64>() < xi[1];
            if !concept_route {
                let k = categorical(&mut rng, &theta);
                tokens.push(categorical(&mut rng, &phi[k]) as u32);
                z.push(k as u32);
                continue;
            }
            let mut c = index.root();
            loop {
                let opts = index.options(c);
                let k = categorical(&mut rng, &zeta[opts.clone()]);
                if opts.start + k == index.exit_slot(c) {
                    break;
                }
                c = index.children(c)[k];
            }
            let m = categorical(&mut rng, &psi[c].probs);
            tokens.push(psi[c].words[m]);
            z.push((t + c) as u32);
        }
        documents.push(Document::new(format!("doc{d:0width$}"), None, tokens));
        docs.push(DocDistributions { xi, theta, zeta });
        assignments.push(z);
    }

    Ok(SyntheticData {
        corpus: Corpus::new(documents, vocab),
        hierarchy,
        truth: GroundTruth {
            phi,
            psi,
            docs,
            assignments,
        },
    })
}
