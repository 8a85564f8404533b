use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use factcheck_core::analysis::{cue_stats, fleiss_kappa, krippendorff_alpha, CueConfig, LabelMatrix};
use factcheck_core::corpus::Corpus;
use factcheck_core::dictionary::{kmeans, CapitalizationNer, DictionaryBuilder, DictionaryParams, KMeansConfig};
use factcheck_core::pipeline::{evaluate, EvalConfig, LexicalOverlapScorer};
use factcheck_core::retrieval::{Bm25Index, Bm25Params, Embedder, HashingEmbedder, Retriever, TfidfIndex};
use factcheck_core::synth::{synth_corpus, synth_cue_claims, synth_eval_claims, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Corpus {
    synth_corpus(&SynthConfig { articles: 500, paragraphs_per_article: 3, seed: 11 }).unwrap()
}

fn retrieval(c: &mut Criterion) {
    let corpus = corpus();
    let query = "The Academy of Prague discussed the budget with Novak";
    let tfidf = TfidfIndex::build(&corpus, 1 << 20).unwrap();
    let bm25 = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
    let mut g = c.benchmark_group("retrieval");
    g.bench_function("tfidf_build_2k", |b| b.iter(|| TfidfIndex::build(black_box(&corpus), 1 << 20).unwrap()));
    g.bench_function("tfidf_rank_top20", |b| b.iter(|| tfidf.rank(black_box(query), 20).unwrap()));
    g.bench_function("bm25_rank_top20", |b| b.iter(|| bm25.rank(black_box(query), 20).unwrap()));
    g.finish();
}

fn dictionary(c: &mut Criterion) {
    let corpus = corpus();
    let embedder = HashingEmbedder::new(128);
    let points: Vec<Vec<f32>> = corpus.paragraphs().take(300).map(|p| embedder.embed(&p.text)).collect();
    let refs: Vec<&[f32]> = points.iter().map(Vec::as_slice).collect();
    let builder = DictionaryBuilder::from_corpus(
        &corpus,
        1 << 20,
        Arc::new(embedder),
        Arc::new(CapitalizationNer),
        DictionaryParams::default(),
    )
    .unwrap();
    let mut g = c.benchmark_group("dictionary");
    g.bench_function("kmeans_300x128_k2", |b| {
        b.iter(|| kmeans(black_box(&refs), &KMeansConfig { k: 2, ..KMeansConfig::default() }).unwrap())
    });
    g.bench_function("build_dictionary", |b| {
        b.iter(|| builder.build(black_box("Novak said the Tribunal in Brno would debate housing costs"), 1_700_000_000).unwrap())
    });
    g.finish();
}

fn random_matrix(rng: &mut ChaCha8Rng, items: usize, raters: usize) -> LabelMatrix {
    let names = ["SUP", "REF", "NEI"];
    let rows: Vec<Vec<Option<&str>>> =
        (0..items).map(|_| (0..raters).map(|_| Some(names[rng.gen_range(0..3)])).collect()).collect();
    LabelMatrix::from_names(&rows)
}

fn analysis(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_matrix(&mut rng, 5000, 3);
    let claims = synth_cue_claims(3000, 5);
    let mut g = c.benchmark_group("analysis");
    g.bench_function("alpha_5000x3", |b| b.iter(|| krippendorff_alpha(black_box(&m)).unwrap()));
    g.bench_function("kappa_5000x3", |b| b.iter(|| fleiss_kappa(black_box(&m)).unwrap()));
    g.sample_size(10);
    g.bench_function("cues_3000_bigrams", |b| {
        b.iter(|| cue_stats(black_box(&claims), &CueConfig { order: 2, subsamples: 10, seed: 1 }).unwrap())
    });
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let corpus = corpus();
    let bm25 = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
    let claims = synth_eval_claims(&corpus, 200, 3);
    let scorer = LexicalOverlapScorer::default();
    let config = EvalConfig { ks: vec![1, 5, 20], ..EvalConfig::default() };
    let retriever: &dyn Retriever = &bm25;
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("evaluate_200_claims", |b| {
        b.iter_batched(|| claims.clone(), |cl| evaluate(&cl, &corpus, retriever, &scorer, &config).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, retrieval, dictionary, analysis, pipeline);
criterion_main!(benches);
