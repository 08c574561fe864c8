//! Benchmarks only; run them with `cargo bench -p loracomp-bench`.
