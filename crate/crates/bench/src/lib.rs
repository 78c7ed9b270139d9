//! Criterion benchmarks for the kgd-core kernels; see `benches/kernels.rs`.
