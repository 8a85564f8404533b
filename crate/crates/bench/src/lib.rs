//! Criterion benchmarks for the retrieval, clustering and agreement kernels live under `benches/`.
