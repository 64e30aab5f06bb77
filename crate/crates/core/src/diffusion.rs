//! Denoising diffusion prior over masks.
//!
//! A linear β schedule defines `ᾱ_t = ∏_{u≤t} (1 − β_u)`. The network
//! predicts the noise `ε` in `s_t = √ᾱ_t s_0 + √(1−ᾱ_t) ε` from `s_t` and a
//! sinusoidal embedding of `t/T`. Its prior score at the lowest-noise step is
//! `−ε̂(s, 1) / √(1−ᾱ_1)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::nn::{Adam, ByteReader, DenseNet, Gradients};
use crate::par;
use crate::pool::MaskPool;
use crate::rng;

pub const TIME_EMBED_DIM: usize = 32;
pub const DEFAULT_STEPS: usize = 100;
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced β from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(t_max: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::InvalidConfig(
                "schedule needs at least one step".into(),
            ));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(Error::InvalidConfig(format!(
                "beta endpoints must satisfy 0 < {beta_start} <= {beta_end} < 1"
            )));
        }
        let beta: Vec<f64> = (0..t_max)
            .map(|i| {
                if t_max == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_max - 1) as f64
                }
            })
            .collect();
        let mut alpha_bar = Vec::with_capacity(t_max);
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self {
            beta_start,
            beta_end,
            beta,
            alpha_bar,
        })
    }

    pub fn standard() -> Self {
        Self::linear(DEFAULT_STEPS, BETA_START, BETA_END).expect("default schedule is valid")
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_endpoints(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::TimestepError {
                t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    /// `ᾱ_t` for `1 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.alpha_bar[t - 1])
    }
}

/// `√ᾱ_t s0 + √(1−ᾱ_t) eps`, without clipping.
pub fn forward_noise(
    schedule: &NoiseSchedule,
    s0: &[f64],
    t: usize,
    eps: &[f64],
) -> Result<Vec<f64>> {
    ensure_len(s0.len(), eps.len())?;
    let ab = schedule.alpha_bar(t)?;
    Ok(noise_with(ab, s0, eps))
}

fn noise_with(alpha_bar: f64, s0: &[f64], eps: &[f64]) -> Vec<f64> {
    let a = libm::sqrt(alpha_bar);
    let b = libm::sqrt(1.0 - alpha_bar);
    s0.iter().zip(eps).map(|(s, e)| a * s + b * e).collect()
}

/// Sixteen sine/cosine pairs of `t/T` with frequencies spaced
/// geometrically between 1 and 1000.
pub fn time_embedding(t: usize, t_max: usize, out: &mut [f64]) {
    let tau = t as f64 / t_max as f64;
    let half = TIME_EMBED_DIM / 2;
    for i in 0..half {
        let w = libm::exp(libm::log(1000.0) * i as f64 / (half - 1) as f64);
        out[i] = libm::sin(w * tau);
        out[half + i] = libm::cos(w * tau);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            batch: 64,
            lr: 1e-4,
            seed: 0,
        }
    }
}

/// The ε-prediction network together with its noise schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    net: DenseNet,
    schedule: NoiseSchedule,
    p: usize,
}

impl ScoreNet {
    /// Untrained network: `p + 32 → hidden → hidden → p`.
    pub fn new(p: usize, hidden: usize, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        let net = DenseNet::new(&[p + TIME_EMBED_DIM, hidden, hidden, p], seed)?;
        Ok(Self { net, schedule, p })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    fn input(&self, s: &[f64], t: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.p + TIME_EMBED_DIM];
        x[..self.p].copy_from_slice(s);
        time_embedding(t, self.schedule.steps(), &mut x[self.p..]);
        x
    }

    /// Predicted noise `ε̂(s, t)`.
    pub fn predict_noise(&self, s: &[f64], t: usize) -> Result<Vec<f64>> {
        ensure_len(self.p, s.len())?;
        self.schedule.check(t)?;
        self.net.forward(&self.input(s, t))
    }

    /// Score estimate `−ε̂(s, t) / √(1−ᾱ_t)`.
    pub fn score_at(&self, s: &[f64], t: usize) -> Result<Vec<f64>> {
        let eps = self.predict_noise(s, t)?;
        let scale = libm::sqrt(1.0 - self.schedule.alpha_bar(t)?);
        Ok(eps.into_iter().map(|e| -e / scale).collect())
    }

    /// `∇_s log p(s)` estimate used for guidance (lowest-noise step).
    pub fn prior_score(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.score_at(s, 1)
    }

    pub fn prior_scores(&self, masks: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        par::map(masks, |s| self.prior_score(s))
            .into_iter()
            .collect()
    }

    /// Mean squared ε residual of a single example (averaged over
    /// coordinates), the per-sample training loss.
    pub fn dsm_loss(&self, s0: &[f64], t: usize, eps: &[f64]) -> Result<f64> {
        let st = forward_noise(&self.schedule, s0, t, eps)?;
        let pred = self.predict_noise(&st, t)?;
        Ok(pred
            .iter()
            .zip(eps)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / self.p as f64)
    }

    /// Header: `u32` T, `f64` β start, `f64` β end, `u32` p, `u32` time
    /// embedding width; then the network bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.schedule.steps() as u32).to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_start.to_le_bytes());
        out.extend_from_slice(&self.schedule.beta_end.to_le_bytes());
        out.extend_from_slice(&(self.p as u32).to_le_bytes());
        out.extend_from_slice(&(TIME_EMBED_DIM as u32).to_le_bytes());
        out.extend_from_slice(&self.net.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteReader::new(bytes);
        let t_max = cur.u32()? as usize;
        let b0 = cur.f64()?;
        let b1 = cur.f64()?;
        let p = cur.u32()? as usize;
        let d_t = cur.u32()? as usize;
        if d_t != TIME_EMBED_DIM {
            return Err(Error::Decode(format!(
                "time embedding width {d_t}, expected {TIME_EMBED_DIM}"
            )));
        }
        let schedule =
            NoiseSchedule::linear(t_max, b0, b1).map_err(|e| Error::Decode(format!("{e}")))?;
        let (net, _) = DenseNet::from_bytes(cur.rest())?;
        if net.input_dim() != p + d_t || net.output_dim() != p {
            return Err(Error::Decode("network shape does not match header".into()));
        }
        Ok(Self { net, schedule, p })
    }
}

/// Denoising score matching on the pool: every epoch visits each pool mask
/// once (shuffled) with a fresh `t ~ U{1..T}` and `ε ~ N(0, I)`. Returns the
/// trained network and the mean loss of every epoch.
pub fn train_prior(
    pool: &MaskPool,
    schedule: NoiseSchedule,
    cfg: &PriorConfig,
) -> Result<(ScoreNet, Vec<f64>)> {
    if pool.is_empty() {
        return Err(Error::InsufficientData("empty mask pool".into()));
    }
    let p = pool.dim();
    let mut score = ScoreNet::new(p, cfg.hidden, schedule, rng::derive_seed(cfg.seed, 0))?;
    let mut adam = Adam::for_net(&score.net, cfg.lr);
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut grads = Gradients::zeros_like(&score.net);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let t_max = score.schedule.steps();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch.max(1);
    for epoch in 0..cfg.epochs {
        rng::shuffle(&mut r, &mut order);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grads.fill_zero();
            for &i in chunk {
                let t = 1 + rng::index(&mut r, t_max);
                let eps = rng::normals(&mut r, p);
                let st = noise_with(score.schedule.alpha_bar[t - 1], pool.masks.row(i), &eps);
                let trace = score.net.forward_trace(&score.input(&st, t))?;
                let out = trace.output();
                let mut loss = 0.0;
                let up: Vec<f64> = out
                    .iter()
                    .zip(&eps)
                    .map(|(a, b)| {
                        loss += (a - b) * (a - b);
                        2.0 * (a - b) / p as f64
                    })
                    .collect();
                total += loss / p as f64;
                score.net.backward_accumulate(&trace, &up, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step_net(&mut score.net, &grads)?;
        }
        let mean = total / pool.len() as f64;
        if !mean.is_finite() || !score.net.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        curve.push(mean);
    }
    Ok((score, curve))
}
