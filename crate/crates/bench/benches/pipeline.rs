use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use factdiff_bench::{evolve, snapshot, text};
use factdiff_core::classify::{classify_diff, PipelineConfig};
use factdiff_core::diff::diff_snapshots;
use factdiff_core::ingest::{PopularityTable, RelationMetaTable};
use factdiff_core::metrics::{fluency, ngram_entropy};
use factdiff_core::neighbors::{k_nearest_triples, TfidfIndex};

fn diff(c: &mut Criterion) {
    let mut g = c.benchmark_group("diff");
    for subjects in [1_000u32, 10_000] {
        let old = snapshot(1, subjects);
        let new = evolve(&old, 2);
        g.bench_with_input(BenchmarkId::from_parameter(subjects), &subjects, |b, _| {
            b.iter(|| diff_snapshots(black_box(&old), black_box(&new)))
        });
    }
    g.finish();
}

fn classify(c: &mut Criterion) {
    let old = snapshot(1, 10_000);
    let new = evolve(&old, 2);
    let d = diff_snapshots(&old, &new);
    let (meta, pop, cfg) = (RelationMetaTable::new(), PopularityTable::new(), PipelineConfig::default());
    c.bench_function("classify/10000", |b| b.iter(|| classify_diff(black_box(&d), &meta, &pop, &cfg)));
}

fn tfidf(c: &mut Criterion) {
    let old = snapshot(1, 5_000);
    let new = evolve(&old, 2);
    c.bench_function("tfidf/index/5000", |b| b.iter(|| TfidfIndex::from_snapshots(black_box(&old), &new)));
    let index = TfidfIndex::from_snapshots(&old, &new);
    let pop = PopularityTable::new();
    let queries: Vec<_> = new.triples().step_by(97).take(50).cloned().collect();
    c.bench_function("tfidf/knn/50", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(k_nearest_triples(q, &index, &old, &pop, 10, 500));
            }
        })
    });
}

fn entropy(c: &mut Criterion) {
    let texts: Vec<String> = (0..100).map(|i| text(i, 100)).collect();
    c.bench_function("entropy/trigram/100", |b| b.iter(|| texts.iter().map(|t| ngram_entropy(t, 3)).sum::<f64>()));
    c.bench_function("fluency/100", |b| b.iter(|| fluency(black_box(&texts)).unwrap()));
}

criterion_group!(benches, diff, classify, tfidf, entropy);
criterion_main!(benches);
