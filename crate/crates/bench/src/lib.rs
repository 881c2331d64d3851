//! Criterion benchmarks for the analysis core; see `benches/core.rs`.
