use crate::concepts::ConceptIndex;

use super::{DocCounts, Hyperparameters, ModelKind, ModelState};

/// Word distribution of one concept, supported on its member words only.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptWords {
    /// Member word ids, ascending.
    pub words: Vec<u32>,
    pub probs: Vec<f64>,
}

impl ConceptWords {
    pub fn prob(&self, word: u32) -> f64 {
        self.words.binary_search(&word).map_or(0.0, |p| self.probs[p])
    }
}

/// Document-specific distributions.
///
/// * `xi`: switch distribution `(topic route, concept route)`. For flat models
///   it is the topic and concept mass of `theta`.
/// * `theta`: over `T` topics (hierarchical models) or `T + C` topics and
///   concepts (flat models).
/// * `zeta`: hierarchical models only, flat over concept option slots; the
///   block of concept `c` covers its children then its exit.
#[derive(Debug, Clone, PartialEq)]
pub struct DocDistributions {
    pub xi: [f64; 2],
    pub theta: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimates {
    pub kind: ModelKind,
    pub num_topics: usize,
    pub num_words: usize,
    /// `phi[t][w]`.
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<ConceptWords>,
    pub docs: Vec<DocDistributions>,
    /// Option block offsets (`C + 1` entries) for `zeta`; empty for flat models.
    pub option_offsets: Vec<usize>,
}

impl PointEstimates {
    pub fn num_concepts(&self) -> usize {
        self.psi.len()
    }

    pub fn zeta<'a>(&self, doc: &'a DocDistributions, c: usize) -> &'a [f64] {
        &doc.zeta[self.option_offsets[c]..self.option_offsets[c + 1]]
    }

    /// Most probable words of topic `t` as `(word, probability)`.
    pub fn top_topic_words(&self, t: usize, n: usize) -> Vec<(u32, f64)> {
        top_n(self.phi[t].iter().enumerate().map(|(w, &p)| (w as u32, p)), n)
    }

    pub fn top_concept_words(&self, c: usize, n: usize) -> Vec<(u32, f64)> {
        let cw = &self.psi[c];
        top_n(cw.words.iter().copied().zip(cw.probs.iter().copied()), n)
    }
}

fn top_n(items: impl Iterator<Item = (u32, f64)>, n: usize) -> Vec<(u32, f64)> {
    let mut v: Vec<(u32, f64)> = items.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(n);
    v
}

/// Posterior-mean distributions from the current assignment counts.
pub fn point_estimates(state: &ModelState) -> PointEstimates {
    let cfg = state.config();
    let t = cfg.num_topics;
    let v = state.vocab_size();
    let beta = cfg.beta_phi;
    let phi = (0..t)
        .map(|k| {
            let denom = state.topic_total(k) as f64 + v as f64 * beta;
            (0..v as u32)
                .map(|w| (state.word_topic(w, k) as f64 + beta) / denom)
                .collect()
        })
        .collect();

    let psi = match state.index() {
        Some(idx) => (0..idx.num_concepts())
            .map(|c| {
                let range = idx.member_range(c);
                let denom = state.concept_total(c) as f64 + range.len() as f64 * cfg.beta_psi;
                ConceptWords {
                    words: idx.members(c).to_vec(),
                    probs: range
                        .map(|m| (state.member_count(m) as f64 + cfg.beta_psi) / denom)
                        .collect(),
                }
            })
            .collect(),
        None => Vec::new(),
    };

    let docs = (0..state.num_docs())
        .map(|d| doc_distributions(cfg.kind, t, state.index(), state.hyper(), state.doc_counts(d)))
        .collect();

    PointEstimates {
        kind: cfg.kind,
        num_topics: t,
        num_words: v,
        phi,
        psi,
        docs,
        option_offsets: match (cfg.kind.is_hierarchical(), state.index()) {
            (true, Some(idx)) => idx.option_offsets().to_vec(),
            _ => Vec::new(),
        },
    }
}

/// Document distributions from document-level counts and priors.
pub(crate) fn doc_distributions(
    kind: ModelKind,
    num_topics: usize,
    index: Option<&ConceptIndex>,
    hyper: &Hyperparameters,
    counts: &DocCounts,
) -> DocDistributions {
    let smooth = |n: &[u32], prior: &[f64]| -> Vec<f64> {
        let total: f64 = n.iter().zip(prior).map(|(&c, &a)| c as f64 + a).sum();
        n.iter().zip(prior).map(|(&c, &a)| (c as f64 + a) / total).collect()
    };
    let theta = smooth(&counts.components, &hyper.alpha);
    if !kind.is_hierarchical() {
        let topic_mass: f64 = theta[..num_topics].iter().sum();
        let concept_mass: f64 = theta[num_topics..].iter().sum();
        let xi = if concept_mass == 0.0 { [1.0, 0.0] } else { [topic_mass, concept_mass] };
        return DocDistributions {
            xi,
            theta,
            zeta: Vec::new(),
        };
    }
    let xi = if num_topics == 0 {
        [0.0, 1.0]
    } else {
        let g = hyper.gamma;
        let s = counts.switch;
        let denom = s[0] as f64 + s[1] as f64 + g[0] + g[1];
        [(s[0] as f64 + g[0]) / denom, (s[1] as f64 + g[1]) / denom]
    };
    let idx = index.expect("hierarchical model has an index");
    let mut zeta = vec![0.0; idx.num_options()];
    for c in 0..idx.num_concepts() {
        let opts = idx.options(c);
        let base = opts.start;
        let total: f64 = opts
            .clone()
            .filter(|&s| idx.is_admissible(s))
            .map(|s| counts.options[s] as f64 + hyper.tau[c][s - base])
            .sum();
        if total == 0.0 {
            continue;
        }
        for s in opts.filter(|&s| idx.is_admissible(s)) {
            zeta[s] = (counts.options[s] as f64 + hyper.tau[c][s - base]) / total;
        }
    }
    DocDistributions { xi, theta, zeta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::model::tests::{config_for, toy_corpus, toy_hierarchy};
    use crate::model::{concept_index, init_state, ModelConfig};

    #[test]
    fn zero_counts_give_uniform_phi() {
        let corpus = Corpus::parse("d\t\ta b c\n", None).unwrap();
        let cfg = ModelConfig::new(ModelKind::Tm, 1, 0);
        let hyper = Hyperparameters::initial(&cfg, None);
        // empty documents: strip tokens
        let mut empty = corpus.clone();
        empty.documents[0].tokens.clear();
        let s = ModelState::with_assignments(&empty, &cfg, None, hyper, &[vec![]]).unwrap();
        let est = point_estimates(&s);
        for p in &est.phi[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_matches_hand_evaluation() {
        // topic 0 column (2, 1, 0)
        let corpus = Corpus::parse("d\t\ta a b c\n", None).unwrap();
        let cfg = ModelConfig::new(ModelKind::Tm, 2, 0);
        let hyper = Hyperparameters::initial(&cfg, None);
        let s = ModelState::with_assignments(&corpus, &cfg, None, hyper, &[vec![0, 0, 0, 1]]).unwrap();
        let est = point_estimates(&s);
        let want = [2.01 / 3.03, 1.01 / 3.03, 0.01 / 3.03];
        for (p, w) in est.phi[0].iter().zip(want) {
            assert!((p - w).abs() < 1e-15, "{p} vs {w}");
        }
    }

    #[test]
    fn psi_uniform_on_support() {
        let corpus = Corpus::parse("d\t\ta b c\n", None).unwrap();
        let h = crate::concepts::ConceptHierarchy::parse("r\t-1\tR\ta,b,c\n", &corpus.vocabulary).unwrap();
        let mut empty = corpus.clone();
        empty.documents[0].tokens.clear();
        let cfg = ModelConfig::new(ModelKind::Cm, 0, 1);
        let index = concept_index(&cfg, Some(&h), 3).unwrap();
        let hyper = Hyperparameters::initial(&cfg, index.as_deref());
        let s = ModelState::with_assignments(&empty, &cfg, index, hyper, &[vec![]]).unwrap();
        let est = point_estimates(&s);
        assert_eq!(est.psi[0].words, vec![0, 1, 2]);
        for w in 0..3 {
            assert!((est.psi[0].prob(w) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(est.psi[0].prob(7), 0.0);
    }

    #[test]
    fn estimates_are_distributions() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        for kind in ModelKind::ALL {
            let s = init_state(&corpus, &config_for(kind), kind.uses_concepts().then_some(&h)).unwrap();
            let est = point_estimates(&s);
            for row in &est.phi {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for cw in &est.psi {
                assert!((cw.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for doc in &est.docs {
                assert!((doc.xi[0] + doc.xi[1] - 1.0).abs() < 1e-9);
                if !doc.theta.is_empty() {
                    assert!((doc.theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
                for c in 0..est.option_offsets.len().saturating_sub(1) {
                    assert!((est.zeta(doc, c).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
