//! Criterion benchmarks for `pdc-core` live under `benches/`.
