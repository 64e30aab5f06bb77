//! Downstream metrics and the subset evaluation protocol: a linear model is
//! fit on the pooled training splits of the training environments and scored
//! separately on every evaluation environment.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::data::{EnvDataset, Split, Task};
use crate::error::{ensure_len, Error, Result};
use crate::predictors::{fit_linear, LinearKind};

/// ℓ2 strength of the downstream ridge / logistic models.
pub const DOWNSTREAM_REG: f64 = 1e-3;

/// Unweighted mean of per-class F1 over the classes present in either input.
/// A class that is never predicted and never observed would score 0, but by
/// construction every class in the union has some support.
pub fn f1_macro(preds: &[f64], targets: &[f64]) -> Result<f64> {
    ensure_len(targets.len(), preds.len())?;
    if preds.is_empty() {
        return Err(Error::InsufficientData("f1 of no predictions".into()));
    }
    let classes: BTreeSet<i64> = preds.iter().chain(targets).map(|&v| v as i64).collect();
    let mut total = 0.0;
    for &c in &classes {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&p, &t) in preds.iter().zip(targets) {
            match (p as i64 == c, t as i64 == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / classes.len() as f64)
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    ensure_len(targets.len(), preds.len())?;
    if preds.is_empty() {
        return Err(Error::InsufficientData("mse of no predictions".into()));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64)
}

/// Whether larger metric values are better for this task (F1 vs MSE).
pub fn higher_is_better(task: Task) -> bool {
    task == Task::Classification
}

pub fn metric(task: Task, preds: &[f64], targets: &[f64]) -> Result<f64> {
    match task {
        Task::Classification => f1_macro(preds, targets),
        Task::Regression => mse(preds, targets),
    }
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<usize> = a.iter().copied().collect();
    let b: BTreeSet<usize> = b.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Mean pairwise Jaccard similarity over unordered pairs.
pub fn overlap_across_seeds(subsets: &[Vec<usize>]) -> Result<f64> {
    if subsets.len() < 2 {
        return Err(Error::InsufficientData(
            "overlap needs at least two subsets".into(),
        ));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..subsets.len() {
        for j in i + 1..subsets.len() {
            total += jaccard(&subsets[i], &subsets[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetEvaluation {
    /// `(environment id, metric)` for every evaluation environment.
    pub per_env: Vec<(usize, f64)>,
    pub mean: f64,
    /// Population standard deviation across evaluation environments.
    pub std: f64,
}

pub fn summarize(per_env: Vec<(usize, f64)>) -> SubsetEvaluation {
    let n = per_env.len() as f64;
    let mean = per_env.iter().map(|p| p.1).sum::<f64>() / n;
    let var = per_env
        .iter()
        .map(|p| (p.1 - mean) * (p.1 - mean))
        .sum::<f64>()
        / n;
    SubsetEvaluation {
        per_env,
        mean,
        std: libm::sqrt(var),
    }
}

pub fn downstream_kind(task: Task) -> LinearKind {
    match task {
        Task::Classification => LinearKind::Logistic,
        Task::Regression => LinearKind::Ridge,
    }
}

/// Fits the downstream model on pooled training rows restricted to `subset`
/// and scores it on each evaluation environment.
pub fn evaluate_subset(d: &EnvDataset, subset: &[usize]) -> Result<SubsetEvaluation> {
    let model = fit_linear(
        d,
        &d.pooled(Split::Train),
        downstream_kind(d.task()),
        DOWNSTREAM_REG,
        subset,
    )?;
    let mut per_env = Vec::new();
    for e in d.evaluation_envs() {
        let rows = d.evaluation_rows(e);
        let preds = model.predict(d, &rows);
        let targets: Vec<f64> = rows.iter().map(|&i| d.target()[i]).collect();
        per_env.push((e, metric(d.task(), &preds, &targets)?));
    }
    Ok(summarize(per_env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_macro(&[0.0, 1.0, 1.0], &[0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(
            f1_macro(&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]).unwrap(),
            0.0
        );
        // Confusion: class 1 tp=1 fp=1 fn=1 -> 0.5; class 0 likewise.
        assert_eq!(
            f1_macro(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0]).unwrap(),
            0.5
        );
        assert!(f1_macro(&[], &[]).is_err());
    }

    #[test]
    fn mse_of_exact_predictions() {
        assert_eq!(mse(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(
            overlap_across_seeds(&[vec![1, 2], vec![1, 2], vec![2, 1]]).unwrap(),
            1.0
        );
        assert_eq!(
            overlap_across_seeds(&[vec![0, 1], vec![2, 3]]).unwrap(),
            0.0
        );
        assert!(
            (overlap_across_seeds(&[vec![0, 1], vec![1, 2]]).unwrap() - 1.0 / 3.0).abs() < 1e-15
        );
        assert!(overlap_across_seeds(&[vec![0]]).is_err());
    }

    #[test]
    fn single_environment_std_is_zero() {
        let s = summarize(vec![(3, 0.7)]);
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.7);
    }
}
