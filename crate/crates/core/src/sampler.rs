//! Guided Langevin chains over masks.
//!
//! One step: `ĝ = unit(g_prior) + β·unit(g_lik)`, clipped to `‖ĝ‖ ≤ c`,
//! then `s ← clip(s + η_k ĝ + √(2η_k τ) ξ)` with `ξ ~ N(0, I)` and
//! `η_k = η₀ / (1+k)^0.55`, τ being a noise temperature. Normalization, clipping and projection can be
//! switched off to run plain unadjusted Langevin dynamics.

use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::ScoreNet;
use crate::error::{ensure_len, Error, Result};
use crate::objective::Energy;
use crate::par;
use crate::rng;

/// Source of `∇_s log p(s)`.
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;

    fn score(&self, s: &[f64]) -> Result<Vec<f64>>;
}

impl ScoreField for ScoreNet {
    fn dim(&self) -> usize {
        ScoreNet::dim(self)
    }

    fn score(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.prior_score(s)
    }
}

/// Uniform prior on the cube: zero score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatPrior {
    pub p: usize,
}

impl ScoreField for FlatPrior {
    fn dim(&self) -> usize {
        self.p
    }

    fn score(&self, s: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.p, s.len())?;
        Ok(vec![0.0; self.p])
    }
}

/// Isotropic Gaussian `N(mean, var·I)`; score `−(s − mean)/var`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScore {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl GaussianScore {
    pub fn standard(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            var: 1.0,
        }
    }
}

impl ScoreField for GaussianScore {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score(&self, s: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.mean.len(), s.len())?;
        Ok(s.iter()
            .zip(&self.mean)
            .map(|(a, m)| -(a - m) / self.var)
            .collect())
    }
}

/// Energy that is identically zero (likelihood switched off).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroEnergy {
    pub p: usize,
}

impl Energy for ZeroEnergy {
    fn dim(&self) -> usize {
        self.p
    }

    fn energy(&self, s: &[f64]) -> Result<f64> {
        ensure_len(self.p, s.len())?;
        Ok(0.0)
    }

    fn energy_and_grad(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        ensure_len(self.p, s.len())?;
        Ok((0.0, vec![0.0; self.p]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `eta0 / (1 + k)^decay`.
    Polynomial {
        eta0: f64,
        decay: f64,
    },
    Constant(f64),
}

impl StepSchedule {
    pub fn eta(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Polynomial { eta0, decay } => eta0 / libm::pow(1.0 + k as f64, decay),
            StepSchedule::Constant(eta) => eta,
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            StepSchedule::Polynomial { eta0, decay } => eta0 > 0.0 && decay >= 0.0,
            StepSchedule::Constant(eta) => eta > 0.0,
        }
    }
}

/// With unit-norm directions the drift per step is at most `(1+β)η`, so
/// 100 steps only leave the uniform start if `η₀` is a sizeable fraction of
/// the cube's width.
pub const DEFAULT_ETA0: f64 = 0.3;
/// The drift is bounded, so at τ = 1 the stationary density is nearly flat
/// over the cube and the sample is decided by the noise. A low temperature
/// concentrates the chains on the modes of prior × likelihood.
pub const DEFAULT_TEMPERATURE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub chains: usize,
    pub beta: f64,
    pub schedule: StepSchedule,
    /// L2 bound on the combined direction; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Rescale prior and likelihood gradients to unit norm before combining.
    pub normalize: bool,
    /// Clip the state into `[0, 1]^p` after every step.
    pub project: bool,
    /// Noise temperature τ: the injected noise is `√(2ητ)·ξ`.
    pub temperature: f64,
    pub seed: u64,
    /// Number of final states to keep per chain (0 keeps none).
    pub tail: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            chains: 10,
            beta: 0.5,
            schedule: StepSchedule::Polynomial {
                eta0: DEFAULT_ETA0,
                decay: 0.55,
            },
            grad_clip: Some(2.0),
            normalize: true,
            project: true,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            tail: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.chains == 0 {
            return Err(Error::InvalidConfig(
                "steps and chains must be at least 1".into(),
            ));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidConfig("beta must be non-negative".into()));
        }
        if !self.schedule.is_valid() {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(
                "temperature must be finite and non-negative".into(),
            ));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::InvalidConfig("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub final_mask: Vec<f64>,
    /// Energy and mean mask value of the starting state.
    pub initial_energy: f64,
    pub initial_density: f64,
    /// Energy after each of the K steps.
    pub energies: Vec<f64>,
    /// Mean mask value after each step.
    pub densities: Vec<f64>,
    /// Coordinates that the projection moved back into the cube.
    pub clipped: usize,
    /// The last `cfg.tail` states.
    pub tail: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Combined update direction before noise.
pub fn combined_direction(g_prior: &[f64], g_lik: &[f64], cfg: &SamplerConfig) -> Result<Vec<f64>> {
    ensure_len(g_prior.len(), g_lik.len())?;
    if g_prior.iter().chain(g_lik).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let (a, b) = if cfg.normalize {
        (
            1.0 / norm(g_prior).max(1e-12),
            cfg.beta / norm(g_lik).max(1e-12),
        )
    } else {
        (1.0, cfg.beta)
    };
    let mut g: Vec<f64> = g_prior
        .iter()
        .zip(g_lik)
        .map(|(p, l)| a * p + b * l)
        .collect();
    if let Some(c) = cfg.grad_clip {
        let n = norm(&g);
        if n > c {
            g.iter_mut().for_each(|v| *v *= c / n);
        }
    }
    Ok(g)
}

fn step_counting(
    s: &[f64],
    g_prior: &[f64],
    g_lik: &[f64],
    eta: f64,
    cfg: &SamplerConfig,
    noise: &[f64],
) -> Result<(Vec<f64>, usize)> {
    ensure_len(s.len(), g_prior.len())?;
    ensure_len(s.len(), noise.len())?;
    if !(eta > 0.0) {
        return Err(Error::InvalidConfig("step size must be positive".into()));
    }
    let g = combined_direction(g_prior, g_lik, cfg)?;
    let amp = libm::sqrt(2.0 * eta * cfg.temperature);
    let mut clipped = 0;
    let out = s
        .iter()
        .zip(&g)
        .zip(noise)
        .map(|((x, d), z)| {
            let v = x + eta * d + amp * z;
            if cfg.project && !(0.0..=1.0).contains(&v) {
                clipped += 1;
                v.clamp(0.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    Ok((out, clipped))
}

/// One guided Langevin update.
pub fn langevin_step(
    s: &[f64],
    g_prior: &[f64],
    g_lik: &[f64],
    eta: f64,
    cfg: &SamplerConfig,
    noise: &[f64],
) -> Result<Vec<f64>> {
    Ok(step_counting(s, g_prior, g_lik, eta, cfg, noise)?.0)
}

fn run_chain<P, E>(prior: &P, energy: &E, cfg: &SamplerConfig, chain: u64) -> Result<ChainTrace>
where
    P: ScoreField + ?Sized,
    E: Energy + ?Sized,
{
    let p = prior.dim();
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, chain));
    let mut s: Vec<f64> = (0..p).map(|_| rng::uniform(&mut r)).collect();
    let (initial_energy, mut grad_u) = energy.energy_and_grad(&s)?;
    let initial_density = s.iter().sum::<f64>() / p as f64;
    let mut energies = Vec::with_capacity(cfg.steps);
    let mut densities = Vec::with_capacity(cfg.steps);
    let mut tail = Vec::with_capacity(cfg.tail.min(cfg.steps));
    let mut clipped = 0;
    for k in 0..cfg.steps {
        let g_prior = prior.score(&s)?;
        let g_lik: Vec<f64> = grad_u.iter().map(|g| -g).collect();
        let noise = rng::normals(&mut r, p);
        let (next, c) = step_counting(&s, &g_prior, &g_lik, cfg.schedule.eta(k), cfg, &noise)?;
        clipped += c;
        s = next;
        let (u, g) = energy.energy_and_grad(&s)?;
        grad_u = g;
        energies.push(u);
        densities.push(s.iter().sum::<f64>() / p as f64);
        if k + cfg.tail >= cfg.steps {
            tail.push(s.clone());
        }
    }
    Ok(ChainTrace {
        final_mask: s,
        initial_energy,
        initial_density,
        energies,
        densities,
        clipped,
        tail,
    })
}

/// Runs `cfg.chains` independent chains from uniform starts; chain `r` uses
/// the seed `derive_seed(cfg.seed, r)`.
pub fn run_chains<P, E>(prior: &P, energy: &E, cfg: &SamplerConfig) -> Result<Vec<ChainTrace>>
where
    P: ScoreField + ?Sized,
    E: Energy + ?Sized,
{
    cfg.validate()?;
    ensure_len(prior.dim(), energy.dim())?;
    let ids: Vec<u64> = (0..cfg.chains as u64).collect();
    par::map(&ids, |&c| run_chain(prior, energy, cfg, c))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_and_noise_are_a_fixed_point() {
        let cfg = SamplerConfig::default();
        let s = vec![0.2, 0.7, 0.4];
        let out = langevin_step(&s, &[0.0; 3], &[0.0; 3], 0.01, &cfg, &[0.0; 3]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn corner_is_held_by_projection() {
        let cfg = SamplerConfig::default();
        let s = vec![1.0, 0.0];
        let out = langevin_step(&s, &[1.0, -1.0], &[3.0, -2.0], 0.5, &cfg, &[0.0; 2]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn beta_zero_ignores_likelihood() {
        let cfg = SamplerConfig {
            beta: 0.0,
            ..SamplerConfig::default()
        };
        let s = vec![0.5, 0.5];
        let a = langevin_step(&s, &[0.3, -0.1], &[5.0, 1.0], 0.01, &cfg, &[0.1, -0.2]).unwrap();
        let b = langevin_step(&s, &[0.3, -0.1], &[-2.0, 7.0], 0.01, &cfg, &[0.1, -0.2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let cfg = SamplerConfig::default();
        let e = langevin_step(&[0.5], &[f64::NAN], &[0.0], 0.01, &cfg, &[0.0]);
        assert_eq!(e, Err(Error::NonFiniteGradient));
    }

    #[test]
    fn direction_is_clipped() {
        let cfg = SamplerConfig {
            beta: 10.0,
            ..SamplerConfig::default()
        };
        let g = combined_direction(&[1.0, 0.0], &[0.0, 1.0], &cfg).unwrap();
        assert!((norm(&g) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_schedule() {
        let s = StepSchedule::Polynomial {
            eta0: 0.01,
            decay: 0.55,
        };
        assert_eq!(s.eta(0), 0.01);
        assert!((s.eta(3) - 0.01 / libm::pow(4.0, 0.55)).abs() < 1e-18);
    }
}
