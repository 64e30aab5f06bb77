//! Discretizing posterior masks into a subset with per-feature uncertainty.
//!
//! Ordering is total and deterministic everywhere: mask values descend with
//! ties going to the lower index; the final selection ranks by inclusion
//! frequency, then by mean mask value, then by index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{ensure_len, Error, Result};

fn check_budget(k: usize, p: usize) -> Result<()> {
    if k == 0 || k > p {
        Err(Error::BudgetError { k, p })
    } else {
        Ok(())
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Indices of the `k` largest values, returned in ascending index order.
pub fn top_k(s: &[f64], k: usize) -> Result<Vec<usize>> {
    check_budget(k, s.len())?;
    let mut idx = ranked(s);
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// All indices ordered by value descending, index ascending.
pub fn ranked(s: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| desc(s[a], s[b]).then(a.cmp(&b)));
    idx
}

fn check_samples(samples: &[Vec<f64>]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InsufficientData("no posterior samples".into()))?;
    for s in samples {
        ensure_len(first.len(), s.len())?;
    }
    Ok(first.len())
}

/// Fraction of samples whose top-k set contains each feature.
pub fn inclusion_frequencies(samples: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    let p = check_samples(samples)?;
    let mut counts = vec![0usize; p];
    for s in samples {
        for j in top_k(s, k)? {
            counts[j] += 1;
        }
    }
    let r = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / r).collect())
}

pub fn mean_mask(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let p = check_samples(samples)?;
    let mut m = vec![0.0; p];
    for s in samples {
        for (a, v) in m.iter_mut().zip(s) {
            *a += v;
        }
    }
    let r = samples.len() as f64;
    m.iter_mut().for_each(|v| *v /= r);
    Ok(m)
}

/// Top-k of `pi`, ties broken by higher mean mask value, then lower index.
pub fn final_select(pi: &[f64], samples: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    check_budget(k, pi.len())?;
    let means = mean_mask(samples)?;
    ensure_len(pi.len(), means.len())?;
    let mut idx: Vec<usize> = (0..pi.len()).collect();
    idx.sort_by(|&a, &b| {
        desc(pi[a], pi[b])
            .then(desc(means[a], means[b]))
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

pub fn uncertainty(pi: &[f64]) -> Vec<f64> {
    pi.iter().map(|&p| p.min(1.0 - p)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyStats {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Share of features with uncertainty ≤ 0.25.
    pub q1_share: f64,
    /// Share with 0.25 < uncertainty ≤ 0.5.
    pub q2_share: f64,
    /// Share with uncertainty > 0.5; zero by construction.
    pub q3_share: f64,
    pub mean_confidence: f64,
}

pub fn uncertainty_stats(pi: &[f64]) -> Result<UncertaintyStats> {
    if pi.is_empty() {
        return Err(Error::InsufficientData("empty inclusion vector".into()));
    }
    if let Some(p) = pi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidConfig(format!(
            "inclusion frequency {p} outside [0, 1]"
        )));
    }
    let u = uncertainty(pi);
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let sd = libm::sqrt(u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
    let mut sorted = u.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    let share = |f: &dyn Fn(f64) -> bool| u.iter().filter(|&&v| f(v)).count() as f64 / n;
    Ok(UncertaintyStats {
        mean,
        median,
        sd,
        min: sorted[0],
        max: sorted[m - 1],
        q1_share: share(&|v| v <= 0.25),
        q2_share: share(&|v| v > 0.25 && v <= 0.5),
        q3_share: share(&|v| v > 0.5),
        mean_confidence: 1.0 - mean,
    })
}

/// Everything derived from a set of posterior mask samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub samples: Vec<Vec<f64>>,
    pub k: usize,
    pub topk_sets: Vec<Vec<usize>>,
    pub pi: Vec<f64>,
    pub final_subset: Vec<usize>,
    pub uncertainty: Vec<f64>,
}

impl PosteriorSummary {
    pub fn from_samples(samples: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        let p = check_samples(&samples)?;
        check_budget(k, p)?;
        let topk_sets = samples
            .iter()
            .map(|s| top_k(s, k))
            .collect::<Result<Vec<_>>>()?;
        let pi = inclusion_frequencies(&samples, k)?;
        let final_subset = final_select(&pi, &samples, k)?;
        let uncertainty = uncertainty(&pi);
        Ok(Self {
            samples,
            k,
            topk_sets,
            pi,
            final_subset,
            uncertainty,
        })
    }

    pub fn stats(&self) -> UncertaintyStats {
        uncertainty_stats(&self.pi).expect("pi is a valid frequency vector")
    }

    /// Verifies the structural invariants; returns a description of the
    /// first violation.
    pub fn check_invariants(&self) -> core::result::Result<(), alloc::string::String> {
        let p = self.pi.len();
        if self.topk_sets.len() != self.samples.len() {
            return Err("one top-k set per sample".into());
        }
        for set in &self.topk_sets {
            if set.len() != self.k
                || set.windows(2).any(|w| w[0] >= w[1])
                || set.iter().any(|&j| j >= p)
            {
                return Err(format!("malformed top-k set {set:?}"));
            }
        }
        let total: f64 = self.pi.iter().sum();
        if (total - self.k as f64).abs() > 1e-9 {
            return Err(format!(
                "inclusion frequencies sum to {total}, expected {}",
                self.k
            ));
        }
        let mut f = self.final_subset.clone();
        f.dedup();
        if f.len() != self.k || f.iter().any(|&j| j >= p) {
            return Err(format!("malformed final subset {:?}", self.final_subset));
        }
        if self.uncertainty.iter().any(|u| !(0.0..=0.5).contains(u)) {
            return Err("uncertainty outside [0, 0.5]".into());
        }
        Ok(())
    }
}
