//! Word tagging, concept marginals, top-k subtrees and the path-proximity metric.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::concepts::{ConceptHierarchy, ConceptIndex};
use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{concept_marginals, DocPredictor};
use crate::model::{DocDistributions, PointEstimates};

/// Display class of a tagged token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankClass {
    /// Assigned to the document's `n`-th ranked component (0-based), shown as a letter.
    Top(usize),
    /// Assigned to a component outside the top k.
    Other,
    /// Out of vocabulary: not tagged.
    None,
}

impl RankClass {
    pub fn label(self) -> String {
        match self {
            Self::Top(n) => rank_letter(n),
            Self::Other => "o".into(),
            Self::None => String::new(),
        }
    }
}

/// `a`, `b`, ..., `z`, `aa`, `ab`, ...
fn rank_letter(n: usize) -> String {
    let mut n = n;
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedToken {
    pub raw: String,
    pub in_vocabulary: bool,
    pub component: Option<usize>,
    pub rank: RankClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedComponent {
    /// `t` for topics, `T + c` for concept `c`.
    pub component: usize,
    pub label: String,
    pub probability: f64,
    pub top_words: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedDocument {
    pub doc_id: String,
    pub tokens: Vec<TaggedToken>,
    /// Top-k components by document probability, best first.
    pub top_components: Vec<RankedComponent>,
}

impl TaggedDocument {
    /// `token/letter` text followed by a legend of the top components.
    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n", self.doc_id);
        let body: Vec<String> = self
            .tokens
            .iter()
            .map(|t| match t.rank {
                RankClass::None => t.raw.clone(),
                r => format!("{}/{}", t.raw, r.label()),
            })
            .collect();
        out.push_str(&body.join(" "));
        out.push('\n');
        for (n, c) in self.top_components.iter().enumerate() {
            let words: Vec<String> = c.top_words.iter().map(|(w, p)| format!("{w}:{p:.4}")).collect();
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{}", rank_letter(n), c.label, c.probability, words.join(" "));
        }
        out
    }

    /// One row per token: `doc_id,position,token,in_vocabulary,component,label,rank`.
    pub fn to_csv(&self, with_header: bool) -> String {
        let mut out = String::new();
        if with_header {
            out.push_str("doc_id,position,token,in_vocabulary,component,label,rank\n");
        }
        for (i, t) in self.tokens.iter().enumerate() {
            let label = t
                .component
                .and_then(|z| self.top_components.iter().find(|c| c.component == z))
                .map_or(String::new(), |c| c.label.clone());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&self.doc_id),
                i,
                csv_field(&t.raw),
                t.in_vocabulary,
                t.component.map_or(String::new(), |z| z.to_string()),
                csv_field(&label),
                t.rank.label()
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Display label of component `z`.
pub fn component_label(est: &PointEstimates, index: Option<&ConceptIndex>, z: usize) -> String {
    let t = est.num_topics;
    match (z < t, index) {
        (true, _) => format!("topic-{z}"),
        (false, Some(idx)) => idx.name(z - t).to_string(),
        (false, None) => format!("concept-{}", z - t),
    }
}

/// Tags each token with its maximum-posterior component under the document
/// distributions `doc_dist`, and ranks the document's components.
pub fn tag_document(
    est: &PointEstimates,
    index: Option<&ConceptIndex>,
    doc_dist: &DocDistributions,
    doc: &Document,
    vocabulary: &Vocabulary,
    k: usize,
    top_words: usize,
) -> TaggedDocument {
    let pred = DocPredictor::new(est, index, doc_dist);
    let t = est.num_topics;

    let mut ranked: Vec<(usize, f64)> = pred
        .topic_weights()
        .iter()
        .copied()
        .enumerate()
        .chain(pred.concept_weights().iter().enumerate().map(|(c, &p)| (t + c, p)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);

    let top_components = ranked
        .iter()
        .map(|&(z, p)| {
            let words = if z < t {
                est.top_topic_words(z, top_words)
            } else {
                est.top_concept_words(z - t, top_words)
            };
            RankedComponent {
                component: z,
                label: component_label(est, index, z),
                probability: p,
                top_words: words
                    .into_iter()
                    .map(|(w, p)| (vocabulary.word(w).to_string(), p))
                    .collect(),
            }
        })
        .collect();

    let raw: Vec<String> = match &doc.raw_tokens {
        Some(r) => r.clone(),
        None => doc.tokens.iter().map(|&w| vocabulary.word(w).to_string()).collect(),
    };
    let tokens = raw
        .into_iter()
        .map(|raw| {
            let Some(w) = vocabulary.id(&raw).filter(|&w| (w as usize) < est.num_words) else {
                return TaggedToken {
                    raw,
                    in_vocabulary: false,
                    component: None,
                    rank: RankClass::None,
                };
            };
            let best = best_component(&pred, index, t, w);
            let rank = match best.and_then(|z| ranked.iter().position(|&(c, _)| c == z)) {
                Some(n) => RankClass::Top(n),
                None => RankClass::Other,
            };
            TaggedToken {
                raw,
                in_vocabulary: true,
                component: best,
                rank,
            }
        })
        .collect();

    TaggedDocument {
        doc_id: doc.id.clone(),
        tokens,
        top_components,
    }
}

/// Argmax of the per-component mixture term over the components able to emit `w`.
fn best_component(pred: &DocPredictor<'_>, index: Option<&ConceptIndex>, t: usize, w: u32) -> Option<usize> {
    let concepts = index
        .map(|idx| idx.concepts_of(w).iter().map(|&(c, _)| t + c as usize).collect::<Vec<_>>())
        .unwrap_or_default();
    let mut best: Option<(usize, f64)> = None;
    for z in (0..t).chain(concepts) {
        let v = pred.component_term(z, w);
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((z, v));
        }
    }
    best.map(|(z, _)| z)
}

/// Concept marginals conditional on the concept route.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    pub names: Vec<String>,
    /// `per_doc[d][c]`; each row sums to one.
    pub per_doc: Vec<Vec<f64>>,
    pub average: Vec<f64>,
    /// Concept-route probability of each document, reported separately.
    pub concept_route: Vec<f64>,
    /// Top words of each concept with their probabilities.
    pub top_words: Vec<Vec<(u32, f64)>>,
}

pub fn marginal_concept_distribution(
    est: &PointEstimates,
    index: &ConceptIndex,
    docs: &[DocDistributions],
    top_n: usize,
) -> MarginalReport {
    let c = index.num_concepts();
    let per_doc: Vec<Vec<f64>> = docs.iter().map(|d| concept_marginals(est, index, d)).collect();
    let mut average = vec![0.0; c];
    for row in &per_doc {
        for (a, v) in average.iter_mut().zip(row) {
            *a += v / per_doc.len() as f64;
        }
    }
    MarginalReport {
        names: (0..c).map(|k| index.name(k).to_string()).collect(),
        concept_route: docs.iter().map(|d| d.xi[1]).collect(),
        top_words: (0..c).map(|k| est.top_concept_words(k, top_n)).collect(),
        per_doc,
        average,
    }
}

impl MarginalReport {
    /// `concept,name,marginal,top_words`, concepts in hierarchy order.
    pub fn to_csv(&self, vocabulary: &Vocabulary) -> String {
        let mut out = String::from("concept,name,marginal,top_words\n");
        for c in 0..self.names.len() {
            let _ = writeln!(
                out,
                "{c},{},{},{}",
                csv_field(&self.names[c]),
                self.average[c],
                csv_field(&words_text(&self.top_words[c], vocabulary))
            );
        }
        out
    }
}

fn words_text(words: &[(u32, f64)], vocabulary: &Vocabulary) -> String {
    words
        .iter()
        .map(|&(w, p)| format!("{}:{p:.4}", vocabulary.word(w)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The top-k concepts by average marginal together with all their ancestors.
#[derive(Debug, Clone, PartialEq)]
pub struct Subtree {
    /// Concepts in pre-order with their depth below the root.
    pub nodes: Vec<(usize, usize)>,
    pub top: Vec<usize>,
}

pub fn top_concept_subtree(report: &MarginalReport, hierarchy: &ConceptHierarchy, k: usize) -> Subtree {
    let mut order: Vec<usize> = (0..report.average.len()).collect();
    order.sort_by(|&a, &b| report.average[b].total_cmp(&report.average[a]).then(a.cmp(&b)));
    order.truncate(k);
    let mut keep = BTreeSet::new();
    for &c in &order {
        let mut cur = Some(c);
        while let Some(n) = cur {
            if !keep.insert(n) {
                break;
            }
            cur = hierarchy.node(n).parent;
        }
    }
    let nodes = hierarchy
        .pre_order()
        .into_iter()
        .filter(|c| keep.contains(c))
        .map(|c| (c, hierarchy.depth(c)))
        .collect();
    Subtree { nodes, top: order }
}

impl Subtree {
    pub fn contains(&self, c: usize) -> bool {
        self.nodes.iter().any(|&(n, _)| n == c)
    }

    /// Indented tree: two spaces per level, `*` marks the top-k concepts.
    pub fn to_text(&self, report: &MarginalReport, vocabulary: &Vocabulary) -> String {
        let mut out = String::new();
        for &(c, depth) in &self.nodes {
            let mark = if self.top.contains(&c) { "*" } else { " " };
            let _ = writeln!(
                out,
                "{}{mark} {} {:.4} [{}]",
                "  ".repeat(depth),
                report.names[c],
                report.average[c],
                words_text(&report.top_words[c], vocabulary)
            );
        }
        out
    }

    /// `concept,name,depth,parent,top,marginal,top_words`.
    pub fn to_csv(&self, report: &MarginalReport, hierarchy: &ConceptHierarchy, vocabulary: &Vocabulary) -> String {
        let mut out = String::from("concept,name,depth,parent,top,marginal,top_words\n");
        for &(c, depth) in &self.nodes {
            let _ = writeln!(
                out,
                "{c},{},{depth},{},{},{},{}",
                csv_field(&report.names[c]),
                hierarchy.node(c).parent.map_or(String::new(), |p| p.to_string()),
                self.top.contains(&c),
                report.average[c],
                csv_field(&words_text(&report.top_words[c], vocabulary))
            );
        }
        out
    }
}

/// Mean over `set` of each member's tree distance to its nearest other member.
pub fn min_path_length(hierarchy: &ConceptHierarchy, set: &[usize]) -> Result<f64> {
    if set.len() < 2 {
        return Err(Error::InsufficientConcepts {
            needed: 2,
            available: set.len(),
        });
    }
    let mut total = 0.0;
    for (i, &a) in set.iter().enumerate() {
        let mut best = usize::MAX;
        for (j, &b) in set.iter().enumerate() {
            if i != j {
                best = best.min(hierarchy.tree_distance(a, b)?);
            }
        }
        total += best as f64;
    }
    Ok(total / set.len() as f64)
}

/// Per document, the `m` highest-marginal concepts and their
/// [`min_path_length`]; averaged over documents.
pub fn avg_min_path_length(hierarchy: &ConceptHierarchy, per_doc: &[Vec<f64>], m: usize) -> Result<f64> {
    let c = hierarchy.len();
    if c < m || m < 2 {
        return Err(Error::InsufficientConcepts {
            needed: m.max(2),
            available: c,
        });
    }
    if per_doc.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for row in per_doc {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        order.truncate(m);
        total += min_path_length(hierarchy, &order)?;
    }
    Ok(total / per_doc.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::model::{ConceptWords, ModelKind};
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(["a", "b", "c", "d"])
    }

    /// root {a,b,c,d} with children A {a,b}, B {c}; A has child A1 {b}.
    fn tree(v: &Vocabulary) -> ConceptHierarchy {
        ConceptHierarchy::parse("r\t-1\tRoot\td\nA\tr\tAlpha\ta\nB\tr\tBeta\tc\nA1\tA\tAlpha1\tb\n", v)
            .unwrap()
            .propagated()
    }

    fn cm_estimates(idx: &ConceptIndex, theta: Vec<f64>) -> PointEstimates {
        PointEstimates {
            kind: ModelKind::Cm,
            num_topics: 0,
            num_words: 4,
            phi: Vec::new(),
            psi: (0..idx.num_concepts())
                .map(|c| {
                    let words = idx.members(c).to_vec();
                    let n = words.len();
                    ConceptWords { words, probs: vec![1.0 / n as f64; n] }
                })
                .collect(),
            docs: vec![DocDistributions { xi: [0.0, 1.0], theta, zeta: Vec::new() }],
            option_offsets: Vec::new(),
        }
    }

    #[test]
    fn letters() {
        assert_eq!(rank_letter(0), "a");
        assert_eq!(rank_letter(3), "d");
        assert_eq!(rank_letter(25), "z");
        assert_eq!(rank_letter(26), "aa");
    }

    #[test]
    fn forced_and_oov_tokens() {
        let v = vocab();
        let h = tree(&v);
        let idx = ConceptIndex::new(&h, v.len());
        let est = cm_estimates(&idx, vec![0.1, 0.2, 0.6, 0.1]);
        let corpus = Corpus::parse("d\t\td zzz c\n", Some(&v)).unwrap();
        let doc = &corpus.documents[0];
        let tagged = tag_document(&est, Some(&idx), &est.docs[0], doc, &v, 2, 3);
        // `d` belongs only to the root
        assert_eq!(tagged.tokens[0].component, Some(0));
        assert_eq!(tagged.tokens[0].rank, RankClass::Other);
        assert!(!tagged.tokens[1].in_vocabulary);
        assert_eq!(tagged.tokens[1].rank, RankClass::None);
        // `c`: root 0.1 * 1/4 vs Beta 0.6 * 1
        assert_eq!(tagged.tokens[2].component, Some(2));
        assert_eq!(tagged.tokens[2].rank, RankClass::Top(0));
        assert_eq!(tagged.top_components[0].label, "Beta");
        let text = tagged.to_text();
        assert!(text.contains("d/o zzz c/a"), "{text}");
        assert_eq!(tagged.to_csv(true).lines().count(), 4);
    }

    proptest! {
        #[test]
        fn argmax_ignores_positive_scaling(theta in prop::collection::vec(0.01f64..1.0, 4), s in 0.01f64..100.0) {
            let v = vocab();
            let h = tree(&v);
            let idx = ConceptIndex::new(&h, v.len());
            let est = cm_estimates(&idx, theta.clone());
            let scaled = cm_estimates(&idx, theta.iter().map(|x| x * s).collect());
            let p1 = DocPredictor::new(&est, Some(&idx), &est.docs[0]);
            let p2 = DocPredictor::new(&scaled, Some(&idx), &scaled.docs[0]);
            for w in 0..4 {
                prop_assert_eq!(best_component(&p1, Some(&idx), 0, w), best_component(&p2, Some(&idx), 0, w));
            }
        }
    }

    #[test]
    fn root_only_marginal_is_one() {
        let v = vocab();
        let h = ConceptHierarchy::parse("r\t-1\tR\ta,b\n", &v).unwrap();
        let idx = ConceptIndex::new(&h, v.len());
        let mut est = cm_estimates(&idx, vec![1.0]);
        est.kind = ModelKind::Hcm;
        est.option_offsets = idx.option_offsets().to_vec();
        est.docs[0].theta.clear();
        est.docs[0].zeta = vec![1.0];
        let r = marginal_concept_distribution(&est, &idx, &est.docs, 2);
        assert_eq!(r.per_doc, vec![vec![1.0]]);
    }

    #[test]
    fn subtree_closure_and_saturation() {
        let v = vocab();
        let h = tree(&v);
        let idx = ConceptIndex::new(&h, v.len());
        let est = cm_estimates(&idx, vec![0.1, 0.2, 0.3, 0.4]);
        let r = marginal_concept_distribution(&est, &idx, &est.docs, 2);
        let one = top_concept_subtree(&r, &h, 1);
        // A1 plus its path A, r
        assert_eq!(one.nodes, vec![(0, 0), (1, 1), (3, 2)]);
        let all = top_concept_subtree(&r, &h, 10);
        assert_eq!(all.nodes.len(), 4);
        for &(c, _) in &one.nodes {
            if let Some(p) = h.node(c).parent {
                assert!(one.contains(p));
            }
        }
        assert!(one.to_text(&r, &v).contains("* Alpha1"));
        assert_eq!(all.to_csv(&r, &h, &v).lines().count(), 5);
    }

    #[test]
    fn path_length_examples() {
        let v = vocab();
        let h = tree(&v);
        // siblings A and B
        assert_eq!(min_path_length(&h, &[1, 2]).unwrap(), 2.0);
        // parent with its children
        assert_eq!(min_path_length(&h, &[0, 1, 2]).unwrap(), 1.0);
        assert!(matches!(
            avg_min_path_length(&h, &[vec![0.25; 4]], 5),
            Err(Error::InsufficientConcepts { .. })
        ));
        let per_doc = vec![vec![0.0, 0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0, 0.0]];
        assert_eq!(avg_min_path_length(&h, &per_doc, 2).unwrap(), 1.5);
    }
}
