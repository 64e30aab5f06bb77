//! Synthetic multi-environment data with a known causal / spurious split.
//!
//! Causal features drive the target identically in every environment.
//! Spurious features are generated *from* the target with an
//! environment-dependent coefficient, so they are highly predictive inside
//! each environment but the relation does not transfer.

use alloc::vec::Vec;
use alloc::{format, vec};

use crate::data::{EnvDataset, Task};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_per_env: usize,
    pub p: usize,
    pub k_causal: usize,
    pub k_spurious: usize,
    pub n_envs: usize,
    pub noise_sd: f64,
    /// Spurious coefficients alternate sign across environments.
    pub flip: bool,
    pub seed: u64,
    pub task: Task,
    /// Extra environments appended after the `n_envs` training environments,
    /// marked held out, with freshly drawn spurious coefficients.
    pub held_out_envs: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_env: 500,
            p: 20,
            k_causal: 4,
            k_spurious: 4,
            n_envs: 3,
            noise_sd: 0.5,
            flip: true,
            seed: 0,
            task: Task::Regression,
            held_out_envs: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_causal + self.k_spurious > self.p {
            return Err(Error::InvalidConfig(format!(
                "k_causal + k_spurious = {} exceeds p = {}",
                self.k_causal + self.k_spurious,
                self.p
            )));
        }
        if self.n_envs < 2 {
            return Err(Error::InvalidConfig(
                "synthetic data needs at least 2 environments".into(),
            ));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::InvalidConfig("noise_sd must be positive".into()));
        }
        if self.n_per_env < 3 {
            return Err(Error::InsufficientData(
                "n_per_env must be at least 3".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthTruth {
    pub causal: Vec<usize>,
    pub spurious: Vec<usize>,
}

impl SynthTruth {
    pub fn count_causal(&self, subset: &[usize]) -> usize {
        subset.iter().filter(|j| self.causal.contains(j)).count()
    }

    pub fn count_spurious(&self, subset: &[usize]) -> usize {
        subset.iter().filter(|j| self.spurious.contains(j)).count()
    }
}

/// Generates the dataset. Feature roles are placed at seeded random indices
/// so that index order carries no information.
pub fn synth_shift(spec: &SynthSpec) -> Result<(EnvDataset, SynthTruth)> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let perm = rng::permutation(&mut r, spec.p);
    let mut causal = perm[..spec.k_causal].to_vec();
    let mut spurious = perm[spec.k_causal..spec.k_causal + spec.k_spurious].to_vec();
    causal.sort_unstable();
    spurious.sort_unstable();
    let weights: Vec<f64> = causal.iter().map(|_| rng::sign(&mut r)).collect();
    let base_sign: Vec<f64> = spurious.iter().map(|_| rng::sign(&mut r)).collect();

    let total_envs = spec.n_envs + spec.held_out_envs;
    // gamma[e][i] is the coefficient of spurious feature i in environment e.
    let mut gamma = vec![vec![0.0; spec.k_spurious]; total_envs];
    for (e, g) in gamma.iter_mut().enumerate() {
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = if e >= spec.n_envs {
                rng::sign(&mut r) * rng::uniform_range(&mut r, 0.5, 1.5)
            } else if spec.flip {
                if e % 2 == 0 {
                    base_sign[i]
                } else {
                    -base_sign[i]
                }
            } else {
                rng::uniform_range(&mut r, 0.5, 1.5)
            };
        }
    }

    let n = spec.n_per_env * total_envs;
    let mut x = Matrix::zeros(n, spec.p);
    let mut y = Vec::with_capacity(n);
    let mut env_ids = Vec::with_capacity(n);
    for (e, g) in gamma.iter().enumerate() {
        for _ in 0..spec.n_per_env {
            let row = y.len();
            let mut score = 0.0;
            for (&j, w) in causal.iter().zip(&weights) {
                let v = rng::normal(&mut r);
                x.set(row, j, v);
                score += w * v;
            }
            score += spec.noise_sd * rng::normal(&mut r);
            let target = match spec.task {
                Task::Regression => score,
                Task::Classification => f64::from(u8::from(score > 0.0)),
            };
            for (&j, gj) in spurious.iter().zip(g) {
                x.set(row, j, gj * target + spec.noise_sd * rng::normal(&mut r));
            }
            for j in 0..spec.p {
                if !causal.contains(&j) && !spurious.contains(&j) {
                    x.set(row, j, rng::normal(&mut r));
                }
            }
            y.push(target);
            env_ids.push(e);
        }
    }
    let held_out: Vec<usize> = (spec.n_envs..total_envs).collect();
    let d = EnvDataset::new(x, y, env_ids, spec.task)?.with_held_out(held_out)?;
    Ok((d, SynthTruth { causal, spurious }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_are_disjoint() {
        let (_, t) = synth_shift(&SynthSpec::default()).unwrap();
        assert_eq!(t.causal.len(), 4);
        assert_eq!(t.spurious.len(), 4);
        assert!(t.causal.iter().all(|j| !t.spurious.contains(j)));
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = SynthSpec {
            k_causal: 15,
            k_spurious: 10,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            n_envs: 1,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            noise_sd: 0.0,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn held_out_envs_are_marked() {
        let spec = SynthSpec {
            held_out_envs: 1,
            n_per_env: 50,
            ..SynthSpec::default()
        };
        let (d, _) = synth_shift(&spec).unwrap();
        assert_eq!(d.n_envs(), 4);
        assert_eq!(d.held_out(), &[3]);
        assert_eq!(d.training_envs(), vec![0, 1, 2]);
    }
}
