//! Criterion benchmarks for the simulator and optimizer; see `benches/`.
