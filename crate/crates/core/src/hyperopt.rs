//! Fixed-point (Minka) updates for asymmetric Dirichlet parameters.
//!
//! The switch Beta is handled as a two-component Dirichlet, so `alpha`,
//! `gamma` and every `tau_c` share [`update_dirichlet`].

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ModelState};

/// Lower bound applied to every updated parameter.
pub const FLOOR: f64 = 1e-5;

/// Digamma function for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 || x.is_infinite() {
        return Err(Error::DomainError(x));
    }
    Ok(digamma_pos(x))
}

fn digamma_pos(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // asymptotic series with Bernoulli coefficients B_2k / 2k
    let series = x2
        * (1.0 / 12.0
            - x2 * (1.0 / 120.0
                - x2 * (1.0 / 252.0
                    - x2 * (1.0 / 240.0
                        - x2 * (1.0 / 132.0 - x2 * (691.0 / 32760.0 - x2 / 12.0))))));
    acc + x.ln() - 0.5 / x - series
}

/// `Psi(a + n) - Psi(a)`; a direct sum for small `n`.
fn digamma_diff(a: f64, n: u32) -> f64 {
    match n {
        0 => 0.0,
        1..=16 => (0..n).map(|j| 1.0 / (a + j as f64)).sum(),
        _ => digamma_pos(a + n as f64) - digamma_pos(a),
    }
}

/// Count rows (one per group) over `k` components, stored row-major.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupedCounts {
    k: usize,
    counts: Vec<u32>,
}

impl GroupedCounts {
    pub fn new(k: usize) -> Self {
        Self { k, counts: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[u32]>>(k: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut g = Self::new(k);
        for r in rows {
            g.push_row(r.as_ref());
        }
        g
    }

    pub fn push_row(&mut self, row: &[u32]) {
        assert_eq!(row.len(), self.k, "row length must equal the component count");
        self.counts.extend_from_slice(row);
    }

    pub fn num_components(&self) -> usize {
        self.k
    }

    pub fn num_groups(&self) -> usize {
        self.counts.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.chunks(self.k.max(1)).take(self.num_groups())
    }
}

/// One fixed-point step. Returns `param` unchanged when no group has any
/// counts; results are floored at [`FLOOR`].
pub fn update_dirichlet(counts: &GroupedCounts, param: &[f64]) -> Vec<f64> {
    assert_eq!(counts.num_components(), param.len());
    let total: f64 = param.iter().sum();
    let mut num = vec![0.0; param.len()];
    let mut den = 0.0;
    for row in counts.rows() {
        let n: u32 = row.iter().sum();
        if n == 0 {
            continue;
        }
        den += digamma_diff(total, n);
        for (k, &c) in row.iter().enumerate() {
            num[k] += digamma_diff(param[k], c);
        }
    }
    if den == 0.0 {
        return param.to_vec();
    }
    param
        .iter()
        .zip(&num)
        .map(|(&p, &nu)| (p * (nu / den)).max(FLOOR))
        .collect()
}

/// Runs [`update_dirichlet`] to convergence (max relative change below `tol`).
pub fn fit_dirichlet(counts: &GroupedCounts, init: &[f64], max_iter: usize, tol: f64) -> Vec<f64> {
    let mut p = init.to_vec();
    for _ in 0..max_iter {
        let next = update_dirichlet(counts, &p);
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        p = next;
        if change < tol {
            break;
        }
    }
    p
}

/// One update of every document-level hyperparameter of a chain.
///
/// `alpha` is skipped when the model has no such components, `gamma` and
/// `tau` are only updated for hierarchical models, and only the admissible
/// options of each `tau_c` take part in its update.
pub fn update_all(state: &ModelState) -> Hyperparameters {
    let mut hyper = state.hyper().clone();
    let docs = state.num_docs();
    let doc = |d: usize| state.doc_counts(d);

    if !hyper.alpha.is_empty() {
        let g = GroupedCounts::from_rows(hyper.alpha.len(), (0..docs).map(|d| &doc(d).components));
        hyper.alpha = update_dirichlet(&g, &hyper.alpha);
    }
    if !state.config().kind.is_hierarchical() {
        return hyper;
    }
    let g = GroupedCounts::from_rows(2, (0..docs).map(|d| doc(d).switch));
    let gamma = update_dirichlet(&g, &hyper.gamma);
    hyper.gamma = [gamma[0], gamma[1]];

    if let Some(idx) = state.index() {
        let mut row = Vec::new();
        for c in 0..idx.num_concepts() {
            let opts = idx.options(c);
            let live: Vec<usize> = opts.clone().filter(|&s| idx.is_admissible(s)).collect();
            if live.is_empty() {
                continue;
            }
            let mut g = GroupedCounts::new(live.len());
            for d in 0..docs {
                let dc = doc(d);
                if dc.visits[c] == 0 {
                    continue;
                }
                row.clear();
                row.extend(live.iter().map(|&s| dc.options[s]));
                g.push_row(&row);
            }
            let param: Vec<f64> = live.iter().map(|&s| hyper.tau[c][s - opts.start]).collect();
            let updated = update_dirichlet(&g, &param);
            for (&s, v) in live.iter().zip(updated) {
                hyper.tau[c][s - opts.start] = v;
            }
        }
    }
    hyper
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::model::tests::{config_for, toy_corpus, toy_hierarchy};
    use crate::model::{init_state, ModelConfig, ModelKind};
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Dirichlet, Distribution};

    #[test]
    fn digamma_at_one() {
        assert!((digamma(1.0).unwrap() + 0.577_215_664_901_532_9).abs() < 1e-12);
    }

    #[test]
    fn digamma_domain() {
        assert!(matches!(digamma(0.0), Err(Error::DomainError(_))));
        assert!(digamma(-2.5).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn digamma_against_statrs() {
        for &x in &[1e-3, 0.1, 0.5, 1.5, 3.7, 9.99, 10.0, 42.0, 1e4] {
            let ours = digamma(x).unwrap();
            let theirs = statrs::function::gamma::digamma(x);
            assert!((ours - theirs).abs() < 1e-10 * theirs.abs().max(1.0), "x={x}: {ours} vs {theirs}");
        }
    }

    proptest! {
        #[test]
        fn digamma_recurrence(x in 1e-3f64..200.0) {
            let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            prop_assert!((d - 1.0 / x).abs() < 1e-10);
        }

        #[test]
        fn digamma_diff_matches_difference(a in 1e-3f64..50.0, n in 0u32..60) {
            let direct = digamma_pos(a + n as f64) - digamma_pos(a);
            prop_assert!((digamma_diff(a, n) - direct).abs() < 1e-9);
        }

        #[test]
        fn updates_stay_positive(
            rows in prop::collection::vec(prop::collection::vec(0u32..20, 3), 0..12),
            param in prop::collection::vec(1e-6f64..10.0, 3),
        ) {
            let mut p = param;
            let g = GroupedCounts::from_rows(3, &rows);
            for _ in 0..20 {
                p = update_dirichlet(&g, &p);
                prop_assert!(p.iter().all(|&v| v >= FLOOR && v.is_finite()));
            }
        }

        #[test]
        fn single_component_is_identity(
            rows in prop::collection::vec(0u32..50, 0..10),
            a in 1e-3f64..20.0,
        ) {
            let g = GroupedCounts::from_rows(1, rows.iter().map(|&c| [c]));
            prop_assert_eq!(update_dirichlet(&g, &[a]), vec![a]);
        }
    }

    #[test]
    fn two_component_example() {
        let g = GroupedCounts::from_rows(2, [[2, 0], [1, 1]]);
        let p = update_dirichlet(&g, &[1.0, 1.0]);
        assert!((p[0] - 1.5).abs() < 1e-12, "{p:?}");
        assert!((p[1] - 0.6).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn zero_counts_leave_param_unchanged() {
        let g = GroupedCounts::from_rows(3, [[0, 0, 0], [0, 0, 0]]);
        assert_eq!(update_dirichlet(&g, &[0.3, 1.0, 2.0]), vec![0.3, 1.0, 2.0]);
        assert_eq!(update_dirichlet(&GroupedCounts::new(2), &[0.3, 1.0]), vec![0.3, 1.0]);
    }

    #[test]
    fn recovers_dirichlet_multinomial_parameter() {
        let truth = [0.5, 1.0, 2.0, 0.8, 3.0];
        let mut rng = crate::rng::seeded(11);
        let dir = Dirichlet::new(truth).unwrap();
        let mut g = GroupedCounts::new(truth.len());
        for _ in 0..1000 {
            let p: [f64; 5] = dir.sample(&mut rng);
            let mut row = [0u32; 5];
            for _ in 0..100 {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let k = p
                    .iter()
                    .position(|&q| {
                        acc += q;
                        u < acc
                    })
                    .unwrap_or(4);
                row[k] += 1;
            }
            g.push_row(&row);
        }
        let fit = fit_dirichlet(&g, &[1.0; 5], 5000, 1e-10);
        for (f, t) in fit.iter().zip(truth) {
            assert!(((f - t) / t).abs() < 0.1, "{fit:?}");
        }
    }

    #[test]
    fn hcm_updates_gamma_and_tau_not_alpha() {
        let corpus = toy_corpus();
        let h = toy_hierarchy(&corpus.vocabulary);
        let s = init_state(&corpus, &config_for(ModelKind::Hcm), Some(&h)).unwrap();
        let before = s.hyper().clone();
        let after = update_all(&s);
        assert!(after.alpha.is_empty());
        assert_ne!(after.gamma, before.gamma);
        assert_ne!(after.tau, before.tau);
    }

    #[test]
    fn unvisited_concept_keeps_tau() {
        // only word `a` occurs, so concept y (word c) is never entered
        let corpus = Corpus::parse("d0\t\ta a\nd1\t\ta\nd2\t\tb c\n", None).unwrap();
        let h = toy_hierarchy(&corpus.vocabulary);
        let one = Corpus::new(vec![corpus.documents[0].clone()], corpus.vocabulary.clone());
        let s = init_state(&one, &ModelConfig::new(ModelKind::Hcm, 0, 4), Some(&h)).unwrap();
        let y = 2;
        assert_eq!(s.doc_counts(0).visits[y], 0);
        let after = update_all(&s);
        assert_eq!(after.tau[y], s.hyper().tau[y]);
    }
}
