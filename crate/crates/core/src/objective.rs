//! The stability energy `U(s) = mean_e ℓ_e(s) + λ · Var_e ℓ_e(s)` with the
//! population variance over training environments.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{EnvDataset, Split};
use crate::error::{ensure_len, Error, Result};
use crate::par;
use crate::predictors::{
    env_loss, env_loss_and_grad, fit_env_predictor, EnvPredictor, PredictorConfig,
};

pub const DEFAULT_LAMBDA_VAR: f64 = 0.1;

/// A differentiable energy over masks. Lower is better.
pub trait Energy: Sync {
    fn dim(&self) -> usize;

    fn energy(&self, s: &[f64]) -> Result<f64>;

    fn energy_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_env: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub u: f64,
}

/// Mean, population variance and `U` of a set of per-environment losses.
pub fn combine(per_env: Vec<f64>, lambda_var: f64) -> Evaluation {
    let e = per_env.len() as f64;
    let mean = per_env.iter().sum::<f64>() / e;
    let variance = per_env.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / e;
    Evaluation {
        u: mean + lambda_var * variance,
        per_env,
        mean,
        variance,
    }
}

/// `∇U = (1/E) Σ ∇ℓ_e + λ (2/E) Σ (ℓ_e − ℓ̄) ∇ℓ_e`.
pub fn combine_grad(losses: &[f64], grads: &[Vec<f64>], lambda_var: f64) -> Vec<f64> {
    let e = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / e;
    let p = grads.first().map_or(0, Vec::len);
    let mut out = vec![0.0; p];
    for (l, g) in losses.iter().zip(grads) {
        let w = 1.0 / e + lambda_var * 2.0 / e * (l - mean);
        for (o, gi) in out.iter_mut().zip(g) {
            *o += w * gi;
        }
    }
    out
}

/// One frozen predictor per training environment, evaluated on a fixed split
/// (validation by default).
#[derive(Debug, Clone)]
pub struct StabilityObjective<'a> {
    data: &'a EnvDataset,
    predictors: Vec<EnvPredictor>,
    pub lambda_var: f64,
    pub split: Split,
}

impl<'a> StabilityObjective<'a> {
    /// `predictors[i]` must belong to the i-th training environment.
    pub fn new(
        data: &'a EnvDataset,
        predictors: Vec<EnvPredictor>,
        lambda_var: f64,
    ) -> Result<Self> {
        let envs = data.training_envs();
        ensure_len(envs.len(), predictors.len())?;
        for (e, pred) in envs.iter().zip(&predictors) {
            if pred.env_id() != *e {
                return Err(Error::InvalidConfig(alloc::format!(
                    "predictor for environment {} supplied where {} was expected",
                    pred.env_id(),
                    e
                )));
            }
            ensure_len(data.n_features(), pred.n_features())?;
        }
        if !(lambda_var >= 0.0) {
            return Err(Error::InvalidConfig(
                "lambda_var must be non-negative".into(),
            ));
        }
        Ok(Self {
            data,
            predictors,
            lambda_var,
            split: Split::Validation,
        })
    }

    /// Fits the per-environment predictors (in parallel when enabled) and
    /// builds the objective.
    pub fn fit(data: &'a EnvDataset, cfg: &PredictorConfig, lambda_var: f64) -> Result<Self> {
        let envs = data.training_envs();
        let predictors = par::map(&envs, |&e| fit_env_predictor(data, e, cfg))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Self::new(data, predictors, lambda_var)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn data(&self) -> &'a EnvDataset {
        self.data
    }

    pub fn predictors(&self) -> &[EnvPredictor] {
        &self.predictors
    }

    pub fn evaluate(&self, s: &[f64]) -> Result<Evaluation> {
        let losses = par::map(&self.predictors, |pred| {
            env_loss(pred, self.data, pred.env_id(), self.split, s)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(combine(losses, self.lambda_var))
    }

    pub fn evaluate_with_grad(&self, s: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        let parts = par::map(&self.predictors, |pred| {
            env_loss_and_grad(pred, self.data, pred.env_id(), self.split, s)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = parts.into_iter().unzip();
        let g = combine_grad(&losses, &grads, self.lambda_var);
        Ok((combine(losses, self.lambda_var), g))
    }

    pub fn gradient(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate_with_grad(s)?.1)
    }

    /// `∇ log p(D | s) = −∇U(s)`; tempering is left to the sampler.
    pub fn log_likelihood_grad(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.gradient(s)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }
}

impl Energy for StabilityObjective<'_> {
    fn dim(&self) -> usize {
        self.data.n_features()
    }

    fn energy(&self, s: &[f64]) -> Result<f64> {
        Ok(self.evaluate(s)?.u)
    }

    fn energy_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ev, g) = self.evaluate_with_grad(s)?;
        Ok((ev.u, g))
    }
}

/// `U(s) = ‖s − target‖²`, a test energy with a known minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEnergy {
    pub target: Vec<f64>,
}

impl Energy for QuadraticEnergy {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn energy(&self, s: &[f64]) -> Result<f64> {
        ensure_len(self.target.len(), s.len())?;
        Ok(s.iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    fn energy_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        let u = self.energy(s)?;
        Ok((
            u,
            s.iter()
                .zip(&self.target)
                .map(|(a, b)| 2.0 * (a - b))
                .collect(),
        ))
    }
}
