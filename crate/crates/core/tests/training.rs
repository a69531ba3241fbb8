use hctm_core::corpus::split_train_test;
use hctm_core::eval::{
    fold_in, generate_synthetic, run_sweep, DocLength, SweepGrid, SweepSettings, SyntheticSpec,
};
use hctm_core::model::{ModelConfig, ModelKind};
use hctm_core::report::marginal_concept_distribution;
use hctm_core::rng::chain_seed;
use hctm_core::sampler::{run_chain_with, train, training_perplexity};

fn spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        docs: 120,
        vocab_size: 200,
        topics: 4,
        branching: 2,
        depth: 2,
        doc_length: DocLength::Poisson(40.0),
        tau: 0.1,
        seed,
        ..SyntheticSpec::default()
    }
}

#[test]
fn training_perplexity_drops_over_500_iterations() {
    let mut improved = 0;
    for seed in 0..10 {
        let data = generate_synthetic(&spec(seed)).unwrap();
        let config = ModelConfig {
            iterations: 500,
            seed,
            ..ModelConfig::new(ModelKind::Hctm, 4, data.hierarchy.len())
        };
        let index = Some(std::sync::Arc::new(hctm_core::ConceptIndex::new(&data.hierarchy, 200)));
        let mut first = f64::NAN;
        let last = run_chain_with(&data.corpus, &config, index, chain_seed(seed, 0), |it, s| {
            if it == 1 {
                first = training_perplexity(s);
            }
        })
        .unwrap();
        if training_perplexity(&last) < first {
            improved += 1;
        }
    }
    assert!(improved >= 9, "improved in {improved}/10 seeds");
}

#[test]
fn cm_top_four_concepts_cover_more_than_baseline() {
    let data = generate_synthetic(&SyntheticSpec {
        topics: 0,
        ..spec(3)
    })
    .unwrap();
    let c = data.hierarchy.len();
    let config = ModelConfig {
        iterations: 100,
        chains: 1,
        ..ModelConfig::new(ModelKind::Cm, 0, c)
    };
    let model = train(&data.corpus, &config, Some(&data.hierarchy)).unwrap();
    let chain = &model.chains[0];
    let index = model.index.as_deref().unwrap();
    let fits: Vec<_> = data.corpus.documents[..30]
        .iter()
        .enumerate()
        .map(|(d, doc)| fold_in(&chain.estimates, &chain.hyper, Some(index), &doc.tokens, 50, d as u64).unwrap())
        .collect();
    let report = marginal_concept_distribution(&chain.estimates, index, &fits, 5);
    let coverage: f64 = report
        .per_doc
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(|a, b| b.total_cmp(a));
            r[..4].iter().sum::<f64>()
        })
        .sum::<f64>()
        / report.per_doc.len() as f64;
    assert!(coverage > 4.0 / c as f64, "top-4 coverage {coverage}");
}

#[test]
fn less_training_data_means_higher_perplexity() {
    let data = generate_synthetic(&SyntheticSpec {
        docs: 300,
        ..spec(9)
    })
    .unwrap();
    let (train_c, test_c) = split_train_test(&data.corpus, 0.8, 1).unwrap();
    let grid: SweepGrid = "models=tm,hctm;topics=4;fractions=0.1,0.5,1;seeds=2".parse().unwrap();
    let settings = SweepSettings {
        iterations: 100,
        chains: 1,
        foldin_sweeps: 50,
        ..SweepSettings::default()
    };
    let rows = run_sweep(&grid, &train_c, &test_c, Some(&data.hierarchy), &settings).unwrap();
    for model in rows.chunks(3) {
        let p: Vec<f64> = model.iter().map(|r| r.perplexity).collect();
        assert!(p[0] > p[1] && p[1] > p[2], "{}: {p:?}", model[0].cell.model);
    }
}
