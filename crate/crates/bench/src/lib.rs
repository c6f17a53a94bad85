//! Criterion benchmarks for `jsq-core` live under `benches/`.
