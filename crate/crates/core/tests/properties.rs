use std::collections::BTreeSet;

use proptest::prelude::*;

use hctm_core::concepts::{ConceptHierarchy, ConceptIndex};
use hctm_core::corpus::{split_train_test, Corpus, Document, Vocabulary};
use hctm_core::eval::concept_marginals;
use hctm_core::model::{init_state, point_estimates, ModelConfig, ModelKind};
use hctm_core::rng::seeded;
use hctm_core::sampler::Sampler;
use hctm_core::Error;

fn vocab(v: usize) -> Vocabulary {
    Vocabulary::from_words((0..v).map(|i| format!("w{i}")))
}

fn corpus_strategy(v: usize) -> impl Strategy<Value = Corpus> {
    prop::collection::vec(prop::collection::vec(0..v as u32, 0..12), 1..8).prop_map(move |docs| {
        let documents = docs
            .into_iter()
            .enumerate()
            .map(|(d, t)| Document::new(format!("doc{d}"), (d % 2 == 0).then(|| "g".to_string()), t))
            .collect();
        Corpus::new(documents, vocab(v))
    })
}

/// Random tree: node `i > 0` hangs under some `j < i`. Every word lands in at
/// least one node, so concept-only models are always valid.
fn hierarchy_strategy(v: usize) -> impl Strategy<Value = ConceptHierarchy> {
    (2usize..8)
        .prop_flat_map(move |n| {
            (
                Just(n),
                prop::collection::vec(any::<prop::sample::Index>(), n),
                prop::collection::vec(any::<prop::sample::Index>(), v),
                prop::collection::vec(prop::option::of(any::<prop::sample::Index>()), v),
            )
        })
        .prop_map(move |(n, parent_picks, word_picks, extra)| {
            let parents = (0..n)
                .map(|i| (i > 0).then(|| parent_picks[i].index(i)))
                .collect();
            let mut words = vec![BTreeSet::new(); n];
            for w in 0..v {
                words[word_picks[w].index(n)].insert(w as u32);
                if let Some(e) = extra[w] {
                    words[e.index(n)].insert(w as u32);
                }
            }
            ConceptHierarchy::from_parts(
                (0..n).map(|i| format!("c{i}")).collect(),
                (0..n).map(|i| format!("concept {i}")).collect(),
                parents,
                words,
            )
            .unwrap()
        })
}

fn kind_strategy() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Tm),
        Just(ModelKind::Cm),
        Just(ModelKind::Ctm),
        Just(ModelKind::Hcm),
        Just(ModelKind::Hctm),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_text_round_trip(c in corpus_strategy(9)) {
        let back = Corpus::parse(&c.to_tsv(), Some(&c.vocabulary)).unwrap();
        prop_assert_eq!(back.len(), c.len());
        for (a, b) in back.documents.iter().zip(&c.documents) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(&a.genre, &b.genre);
            prop_assert_eq!(&a.tokens, &b.tokens);
        }
    }

    #[test]
    fn split_is_a_partition(c in corpus_strategy(5), f in 0.05f64..0.95, seed in any::<u64>()) {
        let (train, test) = split_train_test(&c, f, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), c.len());
        prop_assert_eq!(train.len(), (f * c.len() as f64).round() as usize);
        let mut ids: Vec<&str> = train.documents.iter().chain(&test.documents).map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), c.len());
    }

    #[test]
    fn propagation_is_monotone_and_idempotent(h in hierarchy_strategy(10)) {
        let p = h.propagated();
        for c in 0..p.len() {
            prop_assert!(h.node(c).words.is_subset(&p.node(c).words));
            if let Some(parent) = p.node(c).parent {
                prop_assert!(p.node(c).words.is_subset(&p.node(parent).words));
            }
        }
        let again = p.propagated();
        prop_assert_eq!(again.nodes(), p.nodes());
        prop_assert_eq!(&p.node(p.root()).words, &h.covered_words());
    }

    #[test]
    fn tree_distance_is_a_metric(h in hierarchy_strategy(4), picks in prop::collection::vec(any::<prop::sample::Index>(), 3)) {
        let [a, b, c] = [0, 1, 2].map(|i| picks[i].index(h.len()));
        let d = |x, y| h.tree_distance(x, y).unwrap();
        prop_assert_eq!(d(a, a), 0);
        prop_assert_eq!(d(a, b), d(b, a));
        prop_assert!(d(a, c) <= d(a, b) + d(b, c));
        if a != b {
            prop_assert!(d(a, b) > 0);
        }
        prop_assert_eq!(d(a, h.root()), h.depth(a));
    }

    #[test]
    fn sweeps_keep_every_invariant(
        c in corpus_strategy(10),
        h in hierarchy_strategy(10),
        kind in kind_strategy(),
        seed in any::<u64>(),
    ) {
        let h = h.propagated();
        let topics = if matches!(kind, ModelKind::Cm | ModelKind::Hcm) { 0 } else { 2 };
        let concepts = if kind.uses_concepts() { h.len() } else { 0 };
        let config = ModelConfig { seed, ..ModelConfig::new(kind, topics, concepts) };
        let mut state = init_state(&c, &config, (concepts > 0).then_some(&h)).unwrap();
        prop_assert_eq!(state.check_counts(), Vec::<String>::new());
        let mut sampler = Sampler::new(&state);
        let mut rng = seeded(seed);
        for _ in 0..10 {
            sampler.sweep(&mut state, &mut rng).unwrap();
            prop_assert_eq!(state.check_counts(), Vec::<String>::new());
        }
        let est = point_estimates(&state);
        let near = |x: f64| (x - 1.0).abs() < 1e-9;
        for row in &est.phi {
            prop_assert!(near(row.iter().sum()));
        }
        for doc in &est.docs {
            prop_assert!(near(doc.xi.iter().sum()));
            if !doc.theta.is_empty() {
                prop_assert!(near(doc.theta.iter().sum()));
            }
            if let Some(idx) = state.index() {
                prop_assert!(near(concept_marginals(&est, idx, doc).iter().sum()));
            }
        }
        if let Some(idx) = state.index() {
            for (c, cw) in est.psi.iter().enumerate() {
                prop_assert_eq!(&cw.words[..], idx.members(c));
                prop_assert!(cw.words.is_empty() || near(cw.probs.iter().sum()));
            }
        }
    }
}

#[test]
fn cycles_and_missing_roots_are_rejected() {
    let v = vocab(3);
    let two_cycle = ConceptHierarchy::parse("r\t-1\tR\tw0\na\tb\tA\tw1\nb\ta\tB\tw2\n", &v);
    assert!(matches!(two_cycle, Err(Error::CycleDetected(_))), "{two_cycle:?}");
    let rootless = ConceptHierarchy::parse("a\tb\tA\tw1\nb\ta\tB\tw2\n", &v);
    assert!(matches!(rootless, Err(Error::CycleDetected(_))));
    let self_loop = ConceptHierarchy::parse("r\t-1\tR\tw0\na\ta\tA\tw1\n", &v);
    assert!(matches!(self_loop, Err(Error::CycleDetected(_))));
}

#[test]
fn index_masks_follow_word_sets() {
    let v = vocab(4);
    // leaf `e` has no words, so its slot under `x` is inadmissible
    let h = ConceptHierarchy::parse("r\t-1\tR\tw0\nx\tr\tX\tw1\ne\tx\tE\t\n", &v)
        .unwrap()
        .propagated();
    let idx = ConceptIndex::new(&h, 4);
    let x = h.index_of("x").unwrap();
    let e = h.index_of("e").unwrap();
    assert!(!idx.is_admissible(idx.slot_from_parent(e).unwrap()));
    assert!(!idx.is_admissible(idx.exit_slot(e)));
    assert!(idx.is_admissible(idx.exit_slot(x)));
    assert!(idx.is_admissible(idx.slot_from_parent(x).unwrap()));
}
