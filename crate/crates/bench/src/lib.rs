//! Criterion benchmarks for mapcd; see `benches/`.
