use std::hint::black_box;

use ara_core::analysis::analyze_batch;
use ara_core::rappor::{bloom_encode, encode_report};
use ara_core::{
    build_constant_table, generate_corpus, weighted_sum_of_report, CentralStore, ClientReport,
    CohortAssignment, EncodingParams, FleetConfig,
};
use criterion::{BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, seed: u64) -> Vec<ClientReport> {
    generate_corpus(&FleetConfig::exponential(n, 10, 0.5, seed, EncodingParams::default()).unwrap())
        .unwrap()
}

pub fn encoding(c: &mut Criterion) {
    let params = EncodingParams::default();
    let mut group = c.benchmark_group("encoding");
    group.bench_function("bloom_encode", |b| {
        b.iter(|| bloom_encode(black_box("v7"), black_box(33), &params).unwrap())
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    group.bench_function("encode_report", |b| {
        b.iter(|| {
            encode_report(
                black_box("client-1"),
                black_box("v3"),
                &params,
                CohortAssignment::KeyedHash,
                &mut rng,
            )
            .unwrap()
        })
    });
    for n in [1_000usize, 25_000] {
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("generate_corpus", n), &n, |b, &n| {
            b.iter(|| corpus(n, 3))
        });
    }
    group.finish();
}

pub fn aggregation(c: &mut Criterion) {
    let params = EncodingParams::default();
    let table = build_constant_table(32).unwrap();
    let train = corpus(25_000, 5);
    let test: Vec<_> = corpus(1_000, 6)
        .into_iter()
        .map(ClientReport::unlabeled)
        .collect();

    let mut group = c.benchmark_group("aggregation");
    group.bench_function("weighted_sum_of_report", |b| {
        b.iter(|| weighted_sum_of_report(black_box(&train[17]), &table).unwrap())
    });
    group.throughput(Throughput::Elements(train.len() as u64));
    group.bench_function("ingest_25k", |b| {
        b.iter(|| {
            let mut store = CentralStore::new(&params);
            store.ingest_all(&train, &table).unwrap();
            store
        })
    });

    let mut store = CentralStore::new(&params);
    store.ingest_all(&train, &table).unwrap();
    group.throughput(Throughput::Elements(test.len() as u64));
    group.bench_function("analyze_batch_1000", |b| {
        b.iter(|| analyze_batch(black_box(&test), &store, &table).unwrap())
    });
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    encoding(c);
    aggregation(c);
}
