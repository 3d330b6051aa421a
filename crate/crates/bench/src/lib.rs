//! Criterion benchmarks for `delaypred`; see `benches/`.
