use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use hctm_core::eval::{fold_in, generate_synthetic, DocLength, SyntheticSpec};
use hctm_core::hyperopt::digamma;
use hctm_core::model::{init_state, point_estimates, ModelConfig, ModelKind};
use hctm_core::rng::seeded;
use hctm_core::sampler::Sampler;

fn data() -> hctm_core::eval::SyntheticData {
    generate_synthetic(&SyntheticSpec {
        docs: 200,
        vocab_size: 1000,
        topics: 10,
        doc_length: DocLength::Fixed(50),
        seed: 1,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn sweep(c: &mut Criterion) {
    let data = data();
    let mut group = c.benchmark_group("sweep_10k_tokens");
    group.sample_size(20);
    for kind in [ModelKind::Tm, ModelKind::Cm, ModelKind::Ctm, ModelKind::Hcm, ModelKind::Hctm] {
        let topics = if matches!(kind, ModelKind::Cm | ModelKind::Hcm) { 0 } else { 10 };
        let concepts = if kind.uses_concepts() { data.hierarchy.len() } else { 0 };
        let config = ModelConfig::new(kind, topics, concepts);
        let state = init_state(&data.corpus, &config, (concepts > 0).then_some(&data.hierarchy)).unwrap();
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter_batched_ref(
                || (state.clone(), Sampler::new(&state), seeded(3)),
                |(s, sampler, rng)| sampler.sweep(s, rng).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn digamma_bench(c: &mut Criterion) {
    let xs: Vec<f64> = (1..=1000).map(|i| i as f64 * 0.037).collect();
    c.bench_function("digamma_1000", |b| {
        b.iter(|| xs.iter().map(|&x| digamma(black_box(x)).unwrap()).sum::<f64>())
    });
}

fn fold_in_bench(c: &mut Criterion) {
    let data = data();
    let config = ModelConfig::new(ModelKind::Hctm, 10, data.hierarchy.len());
    let mut state = init_state(&data.corpus, &config, Some(&data.hierarchy)).unwrap();
    let mut sampler = Sampler::new(&state);
    let mut rng = seeded(0);
    for _ in 0..20 {
        sampler.sweep(&mut state, &mut rng).unwrap();
    }
    let est = point_estimates(&state);
    let doc = &data.corpus.documents[0].tokens;
    c.bench_function("fold_in_hctm_200_sweeps", |b| {
        b.iter(|| fold_in(&est, state.hyper(), state.index(), black_box(doc), 200, 5).unwrap())
    });
}

criterion_group!(benches, sweep, digamma_bench, fold_in_bench);
criterion_main!(benches);
