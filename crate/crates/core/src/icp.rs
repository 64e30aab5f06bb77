//! Per-feature invariance scores: how consistent a feature's univariate
//! relation with the target is across training environments.
//!
//! For feature `j` a least-squares slope `b_j^e` (with standard error) is fit
//! on each environment's training split. The heterogeneity
//! `H_j = Var_e(b_j^e) / (mean_e se²(b_j^e) + 1e-8)` compares the spread of
//! slopes with their sampling noise; the score is `1 / (1 + H_j)`.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{EnvDataset, Split};
use crate::error::{Error, Result};
use crate::par;

const SE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceScores {
    pub scores: Vec<f64>,
    pub heterogeneity: Vec<f64>,
}

/// Slope and squared standard error, or `None` for a constant column.
fn univariate_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 1e-12 * n {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - a - b * xi;
            r * r
        })
        .sum();
    let sigma2 = rss / (n - 2.0);
    Some((b, sigma2 / sxx))
}

fn heterogeneity(fits: &[Option<(f64, f64)>]) -> f64 {
    let max_se2 = fits.iter().flatten().map(|f| f.1).fold(0.0f64, f64::max);
    let (b, se2): (Vec<f64>, Vec<f64>) = fits.iter().map(|f| f.unwrap_or((0.0, max_se2))).unzip();
    let e = b.len() as f64;
    // Bitwise-equal slopes have exactly zero spread; the two-pass formula
    // could leave rounding residue.
    let var = if b.iter().all(|v| v.to_bits() == b[0].to_bits()) {
        0.0
    } else {
        let mean = b.iter().sum::<f64>() / e;
        b.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e
    };
    let mean_se2 = se2.iter().sum::<f64>() / e;
    var / (mean_se2 + SE_FLOOR)
}

pub fn invariance_scores(d: &EnvDataset) -> Result<InvarianceScores> {
    let envs = d.training_envs();
    if envs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "invariance scores need at least 2 training environments, found {}",
            envs.len()
        )));
    }
    let mut targets = Vec::with_capacity(envs.len());
    for &e in &envs {
        let rows = d.rows(e, Split::Train);
        if rows.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "environment {e} has {} training rows; at least 3 are needed",
                rows.len()
            )));
        }
        targets.push(rows.iter().map(|&i| d.target()[i]).collect::<Vec<f64>>());
    }
    let features: Vec<usize> = (0..d.n_features()).collect();
    let heterogeneity = par::map(&features, |&j| {
        let fits: Vec<Option<(f64, f64)>> = envs
            .iter()
            .zip(&targets)
            .map(|(&e, y)| {
                let x: Vec<f64> = d
                    .rows(e, Split::Train)
                    .iter()
                    .map(|&i| d.features().get(i, j))
                    .collect();
                univariate_fit(&x, y)
            })
            .collect();
        heterogeneity(&fits)
    });
    let scores = heterogeneity.iter().map(|h| 1.0 / (1.0 + h)).collect();
    Ok(InvarianceScores {
        scores,
        heterogeneity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_and_standard_error() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.5];
        let (b, se2) = univariate_fit(&x, &y).unwrap();
        // Hand-computed: sxx = 5, sxy = 10.75, b = 2.15.
        assert!((b - 2.15).abs() < 1e-12);
        let a = 4.125 - 2.15 * 1.5;
        let rss: f64 = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| {
                let r = yi - a - 2.15 * xi;
                r * r
            })
            .sum();
        assert!((se2 - rss / 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_falls_back() {
        assert!(univariate_fit(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).is_none());
        let h = heterogeneity(&[None, Some((1.0, 0.5)), Some((1.0, 0.25))]);
        // slopes (0, 1, 1), se² (0.5, 0.5, 0.25)
        let var = 2.0 / 9.0;
        assert!((h - var / (1.25 / 3.0 + SE_FLOOR)).abs() < 1e-12);
    }

    #[test]
    fn equal_slopes_have_zero_heterogeneity() {
        assert_eq!(heterogeneity(&[Some((0.1, 0.3)); 3]), 0.0);
    }
}
