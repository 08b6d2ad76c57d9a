//! Workload generation and benchmark orchestration.

pub mod bench;
pub mod workload;

pub use bench::{formula_hash, run_bench, BenchError, BenchMetadata, BenchReport, ModeReport};
pub use workload::{gen_workload, WorkloadSpec};
