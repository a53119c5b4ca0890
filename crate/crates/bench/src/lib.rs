//! Criterion benchmarks for the geflab hot paths. Run with `cargo bench -p geflab-bench`.
