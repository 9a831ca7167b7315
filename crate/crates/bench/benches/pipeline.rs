//! Benchmarks for the hot paths: chunking, exact top-k retrieval, chrF
//! scoring, and answer extraction.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use medtrace_core::corpus::{Section, WikiPage};
use medtrace_core::kb::{chunk_page_default, KbParams};
use medtrace_core::metrics::{chrf_pp, ChrfParams};
use medtrace_core::pipeline::extract_answer;
use medtrace_core::retrieval::{top_k, EmbeddingVector, VectorIndex};
use medtrace_core::Lang;

fn page_with_sections(section_count: usize, words_per_section: usize) -> WikiPage {
    let body: String = (0..words_per_section)
        .map(|i| format!("tok{i}"))
        .collect::<Vec<_>>()
        .join(" ");
    WikiPage {
        lang: Lang::En,
        title: "Bench".into(),
        page_id: "bench".into(),
        infobox: None,
        sections: (0..section_count)
            .map(|i| Section {
                heading: format!("Section {i}"),
                body: body.clone(),
            })
            .collect(),
        interlang: BTreeMap::new(),
    }
}

fn bench_chunking(c: &mut Criterion) {
    let mut group = c.benchmark_group("chunk_page");
    let params = KbParams::default();
    for sections in [8usize, 32, 128] {
        let page = page_with_sections(sections, 180);
        group.throughput(Throughput::Elements(sections as u64));
        group.bench_with_input(BenchmarkId::from_parameter(sections), &page, |b, page| {
            b.iter(|| chunk_page_default(page, &params));
        });
    }
    group.finish();
}

fn random_index(entries: usize, dim: usize) -> (VectorIndex, EmbeddingVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut make = |_: usize| {
        let mut v = EmbeddingVector {
            values: (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
            normalized: false,
        };
        v.normalize().unwrap();
        v
    };
    let index = VectorIndex::build(
        Lang::En,
        "bench",
        (0..entries)
            .map(|i| (format!("chunk-{i:06}"), make(i)))
            .collect(),
    )
    .unwrap();
    let query = make(usize::MAX);
    (index, query)
}

fn bench_top_k(c: &mut Criterion) {
    let mut group = c.benchmark_group("top_k");
    for entries in [1_000usize, 10_000, 50_000] {
        let (index, query) = random_index(entries, 256);
        group.throughput(Throughput::Elements(entries as u64));
        group.bench_with_input(
            BenchmarkId::from_parameter(entries),
            &(index, query),
            |b, (index, query)| {
                b.iter(|| top_k(index, query, "q", 5).unwrap());
            },
        );
    }
    group.finish();
}

fn bench_chrf(c: &mut Criterion) {
    let hyp = "recent offers of evacuating residents from the regime sound like thinly veiled threats the doctors said";
    let reference = "recent offers of evacuation from the regime sounded like thinly veiled threats said the doctors";
    c.bench_function("chrf_pp_sentence", |b| {
        b.iter(|| chrf_pp(hyp, reference, &ChrfParams::chrf_pp()).unwrap());
    });
}

fn bench_extract(c: &mut Criterion) {
    let mut trace = String::new();
    for i in 0..60 {
        trace.push_str(&format!(
            "step {i}: weighing option {} against the context\n",
            (i % 5) + 1
        ));
    }
    trace.push_str("Conclusion: 3");
    c.bench_function("extract_answer", |b| {
        b.iter(|| extract_answer(&trace, Lang::En));
    });
}

criterion_group!(benches, bench_chunking, bench_top_k, bench_chrf, bench_extract);
criterion_main!(benches);
