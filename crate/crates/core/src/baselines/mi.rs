//! Plug-in mutual information on equal-width histograms.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{BaselineResult, Method};
use crate::data::{EnvDataset, Split, Task};
use crate::error::Result;
use crate::par;

pub const DEFAULT_BINS: usize = 10;

/// Equal-width bin ids over `[min, max]`; a constant input maps to bin 0.
pub fn bin_equal_width(v: &[f64], bins: usize) -> Vec<usize> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    v.iter()
        .map(|&x| {
            if width <= 0.0 {
                0
            } else {
                (((x - lo) / width * bins as f64) as usize).min(bins - 1)
            }
        })
        .collect()
}

/// MI in nats between two discrete label sequences.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ma: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let px = ma[&x] as f64 / n;
            let py = mb[&y] as f64 / n;
            pxy * libm::log(pxy / (px * py))
        })
        .sum();
    // Rounding can leave a tiny negative value for independent inputs.
    mi.max(0.0)
}

/// Per-feature MI with the target on pooled training rows.
pub fn mutual_information_scores(d: &EnvDataset, bins: usize) -> Vec<f64> {
    let rows = d.pooled(Split::Train);
    let y: Vec<f64> = rows.iter().map(|&i| d.target()[i]).collect();
    let y_bins = match d.task() {
        Task::Classification => y.iter().map(|&v| v as usize).collect(),
        Task::Regression => bin_equal_width(&y, bins),
    };
    let features: Vec<usize> = (0..d.n_features()).collect();
    par::map(&features, |&j| {
        let x: Vec<f64> = rows.iter().map(|&i| d.features().get(i, j)).collect();
        mutual_information(&bin_equal_width(&x, bins), &y_bins)
    })
}

pub fn mi_select(d: &EnvDataset, k: usize, bins: usize) -> Result<BaselineResult> {
    let bins = bins.max(1);
    BaselineResult::from_scores(Method::Mi, mutual_information_scores(d, bins), k)
}
