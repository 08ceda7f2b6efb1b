//! Criterion benchmarks for `morinflow`; see `benches/kernels.rs`.
