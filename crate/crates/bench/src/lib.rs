//! Criterion benchmarks for `hitchin-core`; see `benches/`.
