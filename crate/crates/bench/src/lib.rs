//! Criterion benchmarks for sls-core live in `benches/`.
