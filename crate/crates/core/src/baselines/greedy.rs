//! Greedy forward selection on pooled validation performance.

use alloc::vec;
use alloc::vec::Vec;

use super::{BaselineResult, Method};
use crate::data::{EnvDataset, Split, Task};
use crate::error::{Error, Result};
use crate::eval::{downstream_kind, metric, DOWNSTREAM_REG};
use crate::predictors::fit_linear;

/// Validation score of a subset: F1-macro, or negative MSE for regression,
/// so that larger is always better.
pub(crate) fn validation_score(d: &EnvDataset, subset: &[usize]) -> Result<f64> {
    let model = fit_linear(
        d,
        &d.pooled(Split::Train),
        downstream_kind(d.task()),
        DOWNSTREAM_REG,
        subset,
    )?;
    let val = d.pooled(Split::Validation);
    let preds = model.predict(d, &val);
    let targets: Vec<f64> = val.iter().map(|&i| d.target()[i]).collect();
    let m = metric(d.task(), &preds, &targets)?;
    Ok(match d.task() {
        Task::Classification => m,
        Task::Regression => -m,
    })
}

/// Adds, k times, the feature whose inclusion maximizes the validation score
/// (ties to the lower index). Scores record the selection order: the first
/// pick gets `k / k`, the last `1 / k`, unselected features 0.
pub fn greedy_forward(d: &EnvDataset, k: usize) -> Result<BaselineResult> {
    let p = d.n_features();
    if k == 0 || k > p {
        return Err(Error::BudgetError { k, p });
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut scores = vec![0.0; p];
    for round in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..p).filter(|j| !chosen.contains(j)) {
            let mut trial = chosen.clone();
            trial.push(j);
            let v = validation_score(d, &trial)?;
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, j));
            }
        }
        let (_, j) = best.expect("a candidate remains while round < k <= p");
        chosen.push(j);
        scores[j] = (k - round) as f64 / k as f64;
    }
    let mut subset = chosen;
    subset.sort_unstable();
    Ok(BaselineResult {
        method: Method::Greedy,
        subset,
        scores,
        wall_time: 0.0,
    })
}
