//! Benchmarks only; see `benches/integrate.rs`.
