//! The end-to-end selection pipeline without any IO:
//! invariance scores → mask pool → diffusion prior → environment predictors
//! → guided chains → discretization.

use alloc::vec::Vec;

use crate::data::EnvDataset;
use crate::diffusion::{train_prior, NoiseSchedule, PriorConfig, ScoreNet, BETA_END, BETA_START};
use crate::error::{Error, Result};
use crate::icp::{invariance_scores, InvarianceScores};
use crate::objective::{StabilityObjective, DEFAULT_LAMBDA_VAR};
use crate::pool::{build_pool, MaskPool, DEFAULT_GAMMA, DEFAULT_POOL_SIZE, DEFAULT_SIGMA_MASK};
use crate::predictors::PredictorConfig;
use crate::rng;
use crate::sampler::{run_chains, ChainTrace, FlatPrior, SamplerConfig, ScoreField};
use crate::selection::PosteriorSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Icp,
    Pool,
    Prior,
    Predictors,
    Sampling,
    Selection,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Icp,
        Stage::Pool,
        Stage::Prior,
        Stage::Predictors,
        Stage::Sampling,
        Stage::Selection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Icp => "icp",
            Stage::Pool => "pool",
            Stage::Prior => "prior",
            Stage::Predictors => "predictors",
            Stage::Sampling => "sampling",
            Stage::Selection => "selection",
        }
    }
}

/// Receives stage boundaries, e.g. to time them.
pub trait StageObserver {
    fn begin(&mut self, _stage: Stage) {}
    fn end(&mut self, _stage: Stage) {}
}

impl StageObserver for () {}

/// An error together with the stage that raised it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl core::fmt::Display for StageError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} stage: {}", self.stage.as_str(), self.error)
    }
}

impl core::error::Error for StageError {}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub lambda_var: f64,
    pub pool_size: usize,
    pub sigma_mask: f64,
    pub gamma: f64,
    pub diffusion_steps: usize,
    pub prior: PriorConfig,
    pub predictor: PredictorConfig,
    pub sampler: SamplerConfig,
    /// Bias the pool with invariance scores.
    pub use_icp: bool,
    /// Train a diffusion prior; otherwise a flat prior is used.
    pub use_prior: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 5,
            lambda_var: DEFAULT_LAMBDA_VAR,
            pool_size: DEFAULT_POOL_SIZE,
            sigma_mask: DEFAULT_SIGMA_MASK,
            gamma: DEFAULT_GAMMA,
            diffusion_steps: crate::diffusion::DEFAULT_STEPS,
            prior: PriorConfig::default(),
            predictor: PredictorConfig::default(),
            sampler: SamplerConfig::default(),
            use_icp: true,
            use_prior: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k == 0 || self.k > p {
            return Err(Error::BudgetError { k: self.k, p });
        }
        if !(self.lambda_var >= 0.0) {
            return Err(Error::InvalidConfig("lambda_var must be non-negative".into()));
        }
        self.sampler.validate()
    }

    /// Stage seeds derived from the run seed, so one number controls the run.
    fn stage_seed(&self, stream: u64) -> u64 {
        rng::derive_seed(self.seed, stream)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub invariance: Option<InvarianceScores>,
    pub pool: Option<MaskPool>,
    pub prior: Option<ScoreNet>,
    pub prior_loss: Vec<f64>,
    pub predictor_losses: Vec<f64>,
    pub chains: Vec<ChainTrace>,
    pub summary: PosteriorSummary,
}

fn tag<T>(stage: Stage, r: Result<T>) -> core::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

fn run<T>(
    obs: &mut dyn StageObserver,
    stage: Stage,
    f: impl FnOnce() -> Result<T>,
) -> core::result::Result<T, StageError> {
    obs.begin(stage);
    let out = tag(stage, f());
    obs.end(stage);
    out
}

/// Runs every stage on `d` (expected to be standardized). Output is a pure
/// function of `(d, cfg)`.
pub fn run_pipeline(
    d: &EnvDataset,
    cfg: &PipelineConfig,
    obs: &mut dyn StageObserver,
) -> core::result::Result<PipelineOutput, StageError> {
    tag(Stage::Icp, d.validate().and_then(|_| cfg.validate(d.n_features())))?;

    let invariance = run(obs, Stage::Icp, || {
        if cfg.use_icp {
            invariance_scores(d).map(Some)
        } else {
            Ok(None)
        }
    })?;

    let pool = run(obs, Stage::Pool, || {
        if !cfg.use_prior {
            return Ok(None);
        }
        let bias = invariance.as_ref().map(|s| s.scores.as_slice());
        build_pool(d, cfg.pool_size, cfg.sigma_mask, bias, cfg.gamma, cfg.stage_seed(1)).map(Some)
    })?;

    let (prior, prior_loss) = run(obs, Stage::Prior, || match &pool {
        None => Ok((None, Vec::new())),
        Some(pool) => {
            let schedule = NoiseSchedule::linear(cfg.diffusion_steps, BETA_START, BETA_END)?;
            let pc = PriorConfig { seed: cfg.stage_seed(2), ..cfg.prior.clone() };
            let (net, curve) = train_prior(pool, schedule, &pc)?;
            Ok((Some(net), curve))
        }
    })?;

    let objective = run(obs, Stage::Predictors, || {
        let pc = PredictorConfig { seed: cfg.stage_seed(3), ..cfg.predictor.clone() };
        StabilityObjective::fit(d, &pc, cfg.lambda_var)
    })?;
    let predictor_losses = objective.predictors().iter().map(|p| p.train_loss()).collect();

    let chains = run(obs, Stage::Sampling, || {
        let sc = SamplerConfig { seed: cfg.stage_seed(4), ..cfg.sampler.clone() };
        let flat = FlatPrior { p: d.n_features() };
        let field: &dyn ScoreField = match &prior {
            Some(net) => net,
            None => &flat,
        };
        run_chains(field, &objective, &sc)
    })?;

    let summary = run(obs, Stage::Selection, || {
        let samples = chains.iter().map(|c| c.final_mask.clone()).collect();
        PosteriorSummary::from_samples(samples, cfg.k)
    })?;

    Ok(PipelineOutput {
        invariance,
        pool,
        prior,
        prior_loss,
        predictor_losses,
        chains,
        summary,
    })
}
