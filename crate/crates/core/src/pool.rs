//! Candidate masks the diffusion prior is trained on.
//!
//! Four generator families: independent random draws (optionally tilted
//! towards invariant features), lasso path supports, mutual-information
//! top-k sets and forest-importance top-k sets. Every binary candidate is
//! jittered with Gaussian noise and clipped back into the cube.

use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::{
    forest_importances, lasso_on_pooled, mutual_information_scores, ForestConfig, DEFAULT_BINS,
};
use crate::data::EnvDataset;
use crate::error::{ensure_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::selection::top_k;

pub const DEFAULT_POOL_SIZE: usize = 500;
pub const DEFAULT_SIGMA_MASK: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Random-candidate inclusion probabilities are kept inside this band so
/// that every feature stays admissible.
pub const INCLUSION_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Random,
    Lasso,
    Mi,
    Tree,
}

impl Provenance {
    pub const ALL: [Provenance; 4] = [
        Provenance::Random,
        Provenance::Lasso,
        Provenance::Mi,
        Provenance::Tree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Random => "random",
            Provenance::Lasso => "lasso",
            Provenance::Mi => "mi",
            Provenance::Tree => "tree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Target share of the pool.
    pub fn share(self) -> f64 {
        match self {
            Provenance::Random => 0.4,
            _ => 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPool {
    pub masks: Matrix,
    pub provenance: Vec<Provenance>,
    pub sigma_mask: f64,
}

impl MaskPool {
    pub fn new(masks: Matrix, provenance: Vec<Provenance>, sigma_mask: f64) -> Result<Self> {
        ensure_len(masks.rows(), provenance.len())?;
        if masks.rows() == 0 {
            return Err(Error::InsufficientData("empty mask pool".into()));
        }
        if masks.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig(
                "pool entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            masks,
            provenance,
            sigma_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.masks.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.masks.cols()
    }

    pub fn count(&self, which: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == which).count()
    }
}

/// Masks per family in the order of [`Provenance::ALL`]: the heuristic
/// families get `⌊0.2·m⌋` each and the random family takes the remainder.
pub fn family_counts(m: usize) -> [usize; 4] {
    let each = m / 5;
    [m - 3 * each, each, each, each]
}

/// Per-feature inclusion probability of random candidates:
/// `q_j ∝ 0.5 + γ·bias_j`, rescaled to mean 0.5 and clamped into
/// `[0.01, 0.99]`. Uniform 0.5 without a bias.
pub fn random_inclusion_probs(p: usize, bias: Option<&[f64]>, gamma: f64) -> Result<Vec<f64>> {
    let Some(bias) = bias else {
        return Ok(vec![0.5; p]);
    };
    ensure_len(p, bias.len())?;
    if bias.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::InvalidConfig(
            "bias scores must lie in [0, 1]".into(),
        ));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(
            "gamma must be finite and non-negative".into(),
        ));
    }
    let w: Vec<f64> = bias.iter().map(|b| 0.5 + gamma * b).collect();
    let mean = w.iter().sum::<f64>() / p as f64;
    Ok(w.iter()
        .map(|v| (0.5 * v / mean).clamp(INCLUSION_FLOOR, 1.0 - INCLUSION_FLOOR))
        .collect())
}

/// Budgets swept by the ranked generators: `⌈p/10⌉ ..= ⌈p/2⌉`.
pub fn k_sweep(p: usize) -> Vec<usize> {
    let lo = p.div_ceil(10).max(1);
    let hi = p.div_ceil(2).max(lo);
    (lo..=hi).collect()
}

fn indicator(p: usize, set: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; p];
    for &j in set {
        v[j] = 1.0;
    }
    v
}

pub fn build_pool(
    d: &EnvDataset,
    m: usize,
    sigma_mask: f64,
    bias: Option<&[f64]>,
    gamma: f64,
    seed: u64,
) -> Result<MaskPool> {
    if m == 0 {
        return Err(Error::InvalidConfig("pool size must be at least 1".into()));
    }
    if !(sigma_mask >= 0.0) {
        return Err(Error::InvalidConfig(
            "sigma_mask must be non-negative".into(),
        ));
    }
    let p = d.n_features();
    let q = random_inclusion_probs(p, bias, gamma)?;
    let [n_random, n_lasso, n_mi, n_tree] = family_counts(m);
    let mut r = rng::seeded(seed);
    let mut binary: Vec<(Vec<f64>, Provenance)> = Vec::with_capacity(m);

    for _ in 0..n_random {
        let v = q
            .iter()
            .map(|&qj| f64::from(u8::from(rng::uniform(&mut r) < qj)))
            .collect();
        binary.push((v, Provenance::Random));
    }
    if n_lasso > 0 {
        let path = lasso_on_pooled(d)?;
        for i in 0..n_lasso {
            binary.push((indicator(p, &path[i % path.len()]), Provenance::Lasso));
        }
    }
    let ks = k_sweep(p);
    if n_mi > 0 {
        let scores = mutual_information_scores(d, DEFAULT_BINS);
        for i in 0..n_mi {
            binary.push((
                indicator(p, &top_k(&scores, ks[i % ks.len()])?),
                Provenance::Mi,
            ));
        }
    }
    if n_tree > 0 {
        let cfg = ForestConfig {
            seed: rng::derive_seed(seed, 1),
            ..ForestConfig::default()
        };
        let scores = forest_importances(d, &cfg)?;
        for i in 0..n_tree {
            binary.push((
                indicator(p, &top_k(&scores, ks[i % ks.len()])?),
                Provenance::Tree,
            ));
        }
    }

    let mut masks = Matrix::zeros(m, p);
    let mut provenance = Vec::with_capacity(m);
    for (i, (v, prov)) in binary.into_iter().enumerate() {
        for (j, b) in v.into_iter().enumerate() {
            let jitter = if sigma_mask > 0.0 {
                sigma_mask * rng::normal(&mut r)
            } else {
                0.0
            };
            masks.set(i, j, (b + jitter).clamp(0.0, 1.0));
        }
        provenance.push(prov);
    }
    MaskPool::new(masks, provenance, sigma_mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolStats {
    pub per_feature_mean: Vec<f64>,
    /// Mean value of each mask.
    pub density: Vec<f64>,
    /// Counts of mask densities over ten equal bins of `[0, 1]`.
    pub density_histogram: [usize; 10],
}

pub fn pool_stats(pool: &MaskPool) -> PoolStats {
    let per_feature_mean = pool.masks.column_means();
    let density: Vec<f64> = pool
        .masks
        .iter_rows()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    let mut density_histogram = [0usize; 10];
    for &v in &density {
        density_histogram[((v * 10.0) as usize).min(9)] += 1;
    }
    PoolStats {
        per_feature_mean,
        density,
        density_histogram,
    }
}
