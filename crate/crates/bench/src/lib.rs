//! Criterion benchmarks for the fairmap kernels live under `benches/`.
