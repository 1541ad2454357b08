//! Criterion benchmarks for the coverage pipeline live in `benches/`.
