//! Random-forest impurity importances (CART, bootstrap rows, `√p` candidate
//! features per split).

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{BaselineResult, Method};
use crate::data::{EnvDataset, Split, Task};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 6,
            min_split: 2,
            seed: 0,
        }
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    n_classes: Option<usize>,
    max_depth: usize,
    min_split: usize,
    mtry: usize,
    importance: Vec<f64>,
}

/// `n · impurity` of a node: the sum of squared deviations for regression,
/// `n − Σ c² / n` (n times Gini) for classification.
fn weighted_impurity(stats: &NodeStats) -> f64 {
    match stats {
        NodeStats::Reg { n, sum, sq } => {
            if *n == 0.0 {
                0.0
            } else {
                (sq - sum * sum / n).max(0.0)
            }
        }
        NodeStats::Cls { n, counts } => {
            if *n == 0.0 {
                0.0
            } else {
                n - counts.iter().map(|c| c * c).sum::<f64>() / n
            }
        }
    }
}

#[derive(Clone)]
enum NodeStats {
    Reg { n: f64, sum: f64, sq: f64 },
    Cls { n: f64, counts: Vec<f64> },
}

impl NodeStats {
    fn empty(n_classes: Option<usize>) -> Self {
        match n_classes {
            None => NodeStats::Reg {
                n: 0.0,
                sum: 0.0,
                sq: 0.0,
            },
            Some(c) => NodeStats::Cls {
                n: 0.0,
                counts: vec![0.0; c],
            },
        }
    }

    fn add(&mut self, y: f64, sign: f64) {
        match self {
            NodeStats::Reg { n, sum, sq } => {
                *n += sign;
                *sum += sign * y;
                *sq += sign * y * y;
            }
            NodeStats::Cls { n, counts } => {
                *n += sign;
                counts[y as usize] += sign;
            }
        }
    }
}

impl Grower<'_> {
    fn stats(&self, idx: &[usize]) -> NodeStats {
        let mut s = NodeStats::empty(self.n_classes);
        for &i in idx {
            s.add(self.y[i], 1.0);
        }
        s
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, r: &mut Rng) {
        if depth >= self.max_depth || idx.len() < self.min_split.max(2) {
            return;
        }
        let parent = self.stats(idx);
        let parent_imp = weighted_impurity(&parent);
        if parent_imp <= 1e-12 {
            return;
        }
        let p = self.x[0].len();
        let candidates = rng::sample_without_replacement(r, p, self.mtry);
        // (decrease, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &candidates {
            idx.sort_by(|&a, &b| {
                self.x[a][f]
                    .partial_cmp(&self.x[b][f])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut left = NodeStats::empty(self.n_classes);
            let mut right = parent.clone();
            for w in 0..idx.len() - 1 {
                let yi = self.y[idx[w]];
                left.add(yi, 1.0);
                right.add(yi, -1.0);
                let (a, b) = (self.x[idx[w]][f], self.x[idx[w + 1]][f]);
                if a == b {
                    continue;
                }
                let dec = parent_imp - weighted_impurity(&left) - weighted_impurity(&right);
                if dec > 1e-12 && best.is_none_or(|bst| dec > bst.0) {
                    best = Some((dec, f, 0.5 * (a + b)));
                }
            }
        }
        let Some((dec, f, thr)) = best else { return };
        self.importance[f] += dec;
        // Partition in place: rows with x_f <= thr first.
        let mut split = 0;
        for w in 0..idx.len() {
            if self.x[idx[w]][f] <= thr {
                idx.swap(split, w);
                split += 1;
            }
        }
        let (l, rgt) = idx.split_at_mut(split);
        self.grow(l, depth + 1, r);
        self.grow(rgt, depth + 1, r);
    }
}

/// Normalized total impurity decrease per feature over the forest, computed
/// on pooled training rows. All-zero importances become uniform.
pub fn forest_importances(d: &EnvDataset, cfg: &ForestConfig) -> Result<Vec<f64>> {
    let rows = d.pooled(Split::Train);
    if rows.len() < 2 {
        return Err(Error::InsufficientData(
            "forest needs at least 2 rows".into(),
        ));
    }
    let p = d.n_features();
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| d.features().row(i).to_vec()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| d.target()[i]).collect();
    let n_classes = match d.task() {
        Task::Classification => Some(d.n_classes()),
        Task::Regression => None,
    };
    let mtry = (libm::sqrt(p as f64) as usize).clamp(1, p);
    let tree_ids: Vec<usize> = (0..cfg.trees).collect();
    let per_tree = par::map(&tree_ids, |&t| {
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, t as u64));
        let mut idx: Vec<usize> = (0..x.len()).map(|_| rng::index(&mut r, x.len())).collect();
        let mut g = Grower {
            x: &x,
            y: &y,
            n_classes,
            max_depth: cfg.max_depth,
            min_split: cfg.min_split,
            mtry,
            importance: vec![0.0; p],
        };
        g.grow(&mut idx, 0, &mut r);
        g.importance
    });
    let mut total = vec![0.0; p];
    for imp in per_tree {
        for (t, v) in total.iter_mut().zip(imp) {
            *t += v;
        }
    }
    let s: f64 = total.iter().sum();
    if s > 0.0 {
        total.iter_mut().for_each(|v| *v /= s);
    } else {
        total.iter_mut().for_each(|v| *v = 1.0 / p as f64);
    }
    Ok(total)
}

pub fn rf_select(d: &EnvDataset, k: usize, cfg: &ForestConfig) -> Result<BaselineResult> {
    BaselineResult::from_scores(Method::Rf, forest_importances(d, cfg)?, k)
}
