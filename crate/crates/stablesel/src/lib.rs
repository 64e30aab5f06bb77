//! Data IO, configuration, the comparison harness and the `stablesel`
//! command line on top of `stablesel-core`.

pub mod config;
pub mod csvio;
pub mod error;
pub mod harness;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use harness::{
    compare_methods, prepare, run_stablesel, timing_report, EvalReport, MethodRow, Prepared,
    SelectionRun, StageTimes, METHOD_LABEL,
};
pub use stablesel_core as core;
pub use stablesel_core::eval::{evaluate_subset, f1_macro, overlap_across_seeds};
