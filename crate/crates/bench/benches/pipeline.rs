use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use conjunct_bench::{learnable, miss_distances, population, scoring_inputs, split_items};
use conjunct_core::predictors::{predict_all, FeatureSet, PredictorSpec};
use conjunct_core::splitting::stratified_shuffle_split;
use conjunct_core::synthetic::LEARNABLE_FEATURES;
use conjunct_core::{competition_loss, weibull_fit, ScoreOptions};

fn scoring(c: &mut Criterion) {
    let mut g = c.benchmark_group("competition_loss");
    for n in [1_000, 15_000] {
        let events = population(n, 1);
        let (truth, preds) = scoring_inputs(&events);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| competition_loss(black_box(&truth), black_box(&preds), ScoreOptions::default()))
        });
    }
    g.finish();
}

fn splitting(c: &mut Criterion) {
    let items = split_items(&population(15_000, 2));
    c.bench_function("stratified_split/15000", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            stratified_shuffle_split(black_box(&items), 0.2, seed, false)
        })
    });
}

fn knn(c: &mut Criterion) {
    let train = learnable(4_000, 3);
    let test: Vec<_> = learnable(1_000, 4).iter().map(|c| c.inputs().clone()).collect();
    let spec = PredictorSpec::Knn {
        k: 15,
        features: FeatureSet::Named(LEARNABLE_FEATURES.iter().map(|s| s.to_string()).collect()),
    };
    let mut model = spec.build().expect("valid spec");
    model.fit(&train).expect("fits");
    c.bench_function("knn/fit_4000", |b| {
        b.iter(|| {
            let mut m = spec.build().expect("valid spec");
            m.fit(black_box(&train)).expect("fits");
            m
        })
    });
    c.bench_function("knn/predict_1000", |b| b.iter(|| predict_all(model.as_ref(), black_box(&test))));
}

fn weibull(c: &mut Criterion) {
    let samples = miss_distances(&population(15_000, 5));
    c.bench_function("weibull_fit/15000", |b| b.iter(|| weibull_fit(black_box(&samples), 2.0)));
}

criterion_group!(benches, scoring, splitting, knn, weibull);
criterion_main!(benches);
