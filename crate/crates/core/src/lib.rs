//! Numerical core for stability-guided diffusion feature selection.
//!
//! Feature subsets are relaxed to continuous masks `s ∈ [0,1]^p`. A small
//! score network is trained with denoising score matching on a pool of
//! heuristic candidate masks and acts as a prior; frozen per-environment
//! predictors define a stability energy `U(s)` (mean validation loss plus a
//! cross-environment variance penalty). Guided Langevin chains combine both
//! gradients, and the final masks are discretized into top-k sets whose
//! inclusion frequencies give the selection and its uncertainty.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the `stablesel` crate. The `parallel` feature
//! enables rayon fan-out for chains and per-environment work.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod icp;
pub mod matrix;
pub mod nn;
pub mod objective;
mod par;
pub mod pipeline;
pub mod pool;
pub mod predictors;
pub mod rng;
pub mod sampler;
pub mod selection;
pub mod synth;

pub use data::{EnvDataset, EnvSplits, ScalingParams, Split, Task};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use objective::{Energy, Evaluation, StabilityObjective};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput, Stage, StageError};
pub use selection::PosteriorSummary;
