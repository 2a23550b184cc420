//! Oracles, workload generation, differential testing, and measurements.

pub mod measure;
pub mod oracle;
pub mod workload;

pub use measure::{
    component_checks, fp_trial, measure_access, measure_fp, replay, retrieval_instance, run_differential,
    run_retrieval, space_audit, AccessStats, ComponentCheck, DiffOptions, DiffReport, FpReport, FpTrial, OpStats,
    RetrievalReport, SpaceReport,
};
pub use oracle::{MinimalPrefixOracle, OracleMultiset};
pub use workload::{Op, OpGen, OpMix, Workload};
