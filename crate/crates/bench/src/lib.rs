//! Criterion benchmarks for the protocol suite; see `benches/`.

pub use qanon_core;
