//! Criterion benchmarks for `sqznb-core`; see `benches/`.
