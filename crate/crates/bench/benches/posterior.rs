use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use obfs_bench::bench_sample;
use obfs_core::posterior::{dp_from_scores, posterior_table_from_scores, ScoreTable};
use obfs_core::{HyperparamPolicy, PartitionPrior, SampleStats};

fn score_table(c: &mut Criterion) {
    let mut g = c.benchmark_group("score_table");
    for k in [6, 10, 14] {
        let stats = SampleStats::compute(&bench_sample(k, 500));
        let policy = HyperparamPolicy::new(k);
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| ScoreTable::build(&stats, &policy).unwrap())
        });
    }
    g.finish();
}

fn dp(c: &mut Criterion) {
    let mut g = c.benchmark_group("dp_marginals");
    for k in [6, 10, 14] {
        let scores = ScoreTable::build(
            &SampleStats::compute(&bench_sample(k, 500)),
            &HyperparamPolicy::new(k),
        )
        .unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| dp_from_scores(&scores, &PartitionPrior::Uniform).unwrap())
        });
    }
    g.finish();
}

fn enumeration(c: &mut Criterion) {
    let mut g = c.benchmark_group("enumerate");
    g.sample_size(10);
    for k in [6, 8, 10] {
        let scores = ScoreTable::build(
            &SampleStats::compute(&bench_sample(k, 500)),
            &HyperparamPolicy::new(k),
        )
        .unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| posterior_table_from_scores(&scores, &PartitionPrior::Uniform, 12).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, score_table, dp, enumeration);
criterion_main!(benches);
