//! Lasso / elastic net by cyclic coordinate descent.
//!
//! Objective: `(1/2n) ‖y − Xw‖² + λ(1−α) ‖w‖₁ + (λα/2) ‖w‖²` on centered
//! columns (the intercept is implicit and unpenalized).

use alloc::vec;
use alloc::vec::Vec;

use super::{BaselineResult, Method};
use crate::data::{EnvDataset, Split};
use crate::error::{Error, Result};
use crate::selection;

pub const PATH_LENGTH: usize = 10;
const TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Column-major centered design.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub cols: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Design {
    pub fn new(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InsufficientData("empty design".into()));
        }
        for c in &mut cols {
            if c.len() != n {
                return Err(Error::ShapeError {
                    expected: n,
                    found: c.len(),
                });
            }
            center(c);
        }
        center(&mut y);
        Ok(Self { cols, y })
    }

    /// Rows of a dataset; classification targets enter as their numeric ids.
    pub fn from_rows(d: &EnvDataset, rows: &[usize]) -> Result<Self> {
        let cols = (0..d.n_features())
            .map(|j| rows.iter().map(|&i| d.features().get(i, j)).collect())
            .collect();
        let y = rows.iter().map(|&i| d.target()[i]).collect();
        Self::new(cols, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.cols.len()
    }

    /// `X_jᵀ r / n` for every column.
    pub fn correlations(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        self.cols
            .iter()
            .map(|c| c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / n)
            .collect()
    }

    pub fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (c, &wj) in self.cols.iter().zip(w) {
            if wj != 0.0 {
                for (ri, x) in r.iter_mut().zip(c) {
                    *ri -= wj * x;
                }
            }
        }
        r
    }
}

fn center(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Smallest λ at which every coefficient is zero.
pub fn lambda_max(design: &Design, alpha: f64) -> f64 {
    let c = design.correlations(&design.y);
    c.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 - alpha).max(1e-3)
}

/// `n` log-spaced values from `lmax` down to `lmax / 100`.
pub fn lambda_grid(lmax: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lmax];
    }
    (0..n)
        .map(|i| lmax * libm::pow(10.0, -2.0 * i as f64 / (n - 1) as f64))
        .collect()
}

/// Cyclic coordinate descent from the warm start `w` (updated in place).
/// Returns the number of sweeps.
pub fn coordinate_descent(design: &Design, lambda: f64, alpha: f64, w: &mut [f64]) -> usize {
    let n = design.n() as f64;
    let sq: Vec<f64> = design
        .cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>() / n)
        .collect();
    let l1 = lambda * (1.0 - alpha);
    let l2 = lambda * alpha;
    let mut r = design.residual(w);
    for sweep in 1..=MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for (j, c) in design.cols.iter().enumerate() {
            if sq[j] == 0.0 {
                w[j] = 0.0;
                continue;
            }
            let old = w[j];
            let rho = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n + sq[j] * old;
            let new = soft_threshold(rho, l1) / (sq[j] + l2);
            if new != old {
                let delta = new - old;
                for (ri, x) in r.iter_mut().zip(c) {
                    *ri -= delta * x;
                }
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < TOL {
            return sweep;
        }
    }
    MAX_SWEEPS
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub coef: Vec<f64>,
}

impl PathPoint {
    pub fn support(&self) -> Vec<usize> {
        (0..self.coef.len())
            .filter(|&j| self.coef[j] != 0.0)
            .collect()
    }
}

/// Warm-started solutions along a decreasing λ grid.
pub fn lasso_path(design: &Design, alpha: f64, grid: &[f64]) -> Vec<PathPoint> {
    let mut w = vec![0.0; design.p()];
    grid.iter()
        .map(|&lambda| {
            coordinate_descent(design, lambda, alpha, &mut w);
            PathPoint {
                lambda,
                coef: w.clone(),
            }
        })
        .collect()
}

/// Picks the sparsest path point with at least `k` nonzeros (the last point
/// if none qualifies).
pub(crate) fn choose_point(path: &[PathPoint], k: usize) -> &PathPoint {
    path.iter()
        .find(|pt| pt.support().len() >= k)
        .unwrap_or_else(|| path.last().expect("non-empty path"))
}

pub(crate) fn lasso_on_design(design: &Design, alpha: f64) -> Vec<PathPoint> {
    let grid = lambda_grid(lambda_max(design, alpha), PATH_LENGTH);
    lasso_path(design, alpha, &grid)
}

/// Supports along the default lasso path on pooled training rows.
pub fn lasso_on_pooled(d: &EnvDataset) -> Result<Vec<Vec<usize>>> {
    let design = Design::from_rows(d, &d.pooled(Split::Train))?;
    Ok(lasso_on_design(&design, 0.0)
        .iter()
        .map(PathPoint::support)
        .collect())
}

/// Pooled-training-data lasso (`l2_mix = 0`) or elastic net; returns the
/// top-k features by absolute coefficient at the chosen λ.
pub fn lasso_select(d: &EnvDataset, k: usize, l2_mix: f64) -> Result<BaselineResult> {
    if !(0.0..1.0).contains(&l2_mix) {
        return Err(Error::InvalidConfig("l2_mix must lie in [0, 1)".into()));
    }
    let design = Design::from_rows(d, &d.pooled(Split::Train))?;
    let path = lasso_on_design(&design, l2_mix);
    let point = choose_point(&path, k);
    let scores: Vec<f64> = point.coef.iter().map(|w| w.abs()).collect();
    let method = if l2_mix == 0.0 {
        Method::Lasso
    } else {
        Method::ElasticNet
    };
    let subset = selection::top_k(&scores, k)?;
    Ok(BaselineResult {
        method,
        subset,
        scores,
        wall_time: 0.0,
    })
}
