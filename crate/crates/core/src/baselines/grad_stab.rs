//! Direct projected Adam descent on an energy, then top-k.

use alloc::vec;
use alloc::vec::Vec;

use super::{BaselineResult, Method};
use crate::error::Result;
use crate::nn::Adam;
use crate::objective::Energy;
use crate::selection;

#[derive(Debug, Clone, PartialEq)]
pub struct GradStabConfig {
    pub steps: usize,
    pub lr: f64,
    pub init: f64,
}

impl Default for GradStabConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 1e-2,
            init: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradStabTrace {
    pub final_mask: Vec<f64>,
    /// Energy before the first step and after every step.
    pub energies: Vec<f64>,
}

/// Deterministic: starts from `init · 1` and takes no random draws.
pub fn grad_stab<E: Energy + ?Sized>(
    energy: &E,
    k: usize,
    cfg: &GradStabConfig,
) -> Result<(BaselineResult, GradStabTrace)> {
    let p = energy.dim();
    let mut s = vec![cfg.init.clamp(0.0, 1.0); p];
    let mut adam = Adam::new(p, cfg.lr);
    let mut energies = Vec::with_capacity(cfg.steps + 1);
    for _ in 0..cfg.steps {
        let (u, g) = energy.energy_and_grad(&s)?;
        energies.push(u);
        adam.step(&mut s, &g)?;
        s.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    energies.push(energy.energy(&s)?);
    let subset = selection::top_k(&s, k)?;
    let result = BaselineResult {
        method: Method::GradStab,
        subset,
        scores: s.clone(),
        wall_time: 0.0,
    };
    Ok((
        result,
        GradStabTrace {
            final_mask: s,
            energies,
        },
    ))
}
