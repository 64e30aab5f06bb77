//! Stability selection: lasso supports over random half-subsamples.

use alloc::vec;
use alloc::vec::Vec;

use super::lasso::{choose_point, lasso_on_design, Design};
use super::{BaselineResult, Method};
use crate::data::{EnvDataset, Split};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;

pub const DEFAULT_SUBSAMPLES: usize = 50;

/// Selection frequency of each feature in the lasso support (at the λ rule
/// of `lasso_select`) over `b` subsamples of size `⌊n/2⌋`; top-k by
/// frequency with ties to the lower index.
pub fn stability_selection(
    d: &EnvDataset,
    k: usize,
    b: usize,
    seed: u64,
) -> Result<BaselineResult> {
    if b == 0 {
        return Err(Error::InvalidConfig(
            "stability selection needs at least one subsample".into(),
        ));
    }
    let rows = d.pooled(Split::Train);
    let half = rows.len() / 2;
    if half < 2 {
        return Err(Error::InsufficientData("too few rows to subsample".into()));
    }
    let ids: Vec<u64> = (0..b as u64).collect();
    let supports = par::map(&ids, |&i| -> Result<Vec<usize>> {
        let mut r = rng::seeded(rng::derive_seed(seed, i));
        let pick = rng::sample_without_replacement(&mut r, rows.len(), half);
        let sub: Vec<usize> = pick.into_iter().map(|t| rows[t]).collect();
        let design = Design::from_rows(d, &sub)?;
        let path = lasso_on_design(&design, 0.0);
        Ok(choose_point(&path, k).support())
    });
    let mut freq = vec![0.0; d.n_features()];
    for s in supports {
        for j in s? {
            freq[j] += 1.0;
        }
    }
    freq.iter_mut().for_each(|f| *f /= b as f64);
    BaselineResult::from_scores(Method::Stabsel, freq, k)
}
