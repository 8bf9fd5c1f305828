//! Criterion benchmarks for tvmix; see `benches/`.
