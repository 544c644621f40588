//! Criterion benchmarks for `gradnoise`; see `benches/training.rs`.
