//! Comparison selectors. Each maps a dataset and a budget `k` to exactly `k`
//! feature indices plus a per-feature relevance score. All of them only look
//! at the training environments.

use alloc::vec::Vec;

use crate::data::EnvDataset;
use crate::error::Result;
use crate::selection;

mod forest;
mod grad_stab;
mod greedy;
mod icp_only;
mod lasso;
mod mi;
mod stabsel;

pub use forest::{forest_importances, rf_select, ForestConfig};
pub use grad_stab::{grad_stab, GradStabConfig, GradStabTrace};
pub use greedy::greedy_forward;
pub use icp_only::icp_only;
pub use lasso::{
    coordinate_descent, lambda_grid, lambda_max, lasso_on_pooled, lasso_path, lasso_select,
    soft_threshold, Design, PathPoint,
};
pub use mi::{bin_equal_width, mi_select, mutual_information, mutual_information_scores, DEFAULT_BINS};
pub use stabsel::stability_selection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Lasso,
    ElasticNet,
    Mi,
    Rf,
    Stabsel,
    Greedy,
    GradStab,
    IcpOnly,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Lasso,
        Method::ElasticNet,
        Method::Mi,
        Method::Rf,
        Method::Stabsel,
        Method::Greedy,
        Method::GradStab,
        Method::IcpOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::ElasticNet => "elastic_net",
            Method::Mi => "mi",
            Method::Rf => "rf",
            Method::Stabsel => "stabsel",
            Method::Greedy => "greedy",
            Method::GradStab => "grad_stab",
            Method::IcpOnly => "icp_only",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub method: Method,
    pub subset: Vec<usize>,
    pub scores: Vec<f64>,
    /// Filled in by callers that measure time; the core has no clock.
    pub wall_time: f64,
}

impl BaselineResult {
    /// Top-k of `scores` (value descending, index ascending).
    pub(crate) fn from_scores(method: Method, scores: Vec<f64>, k: usize) -> Result<Self> {
        let subset = selection::top_k(&scores, k)?;
        Ok(Self {
            method,
            subset,
            scores,
            wall_time: 0.0,
        })
    }
}

/// Mixing weight used for the elastic-net variant.
pub const ELASTIC_NET_MIX: f64 = 0.5;

/// Runs one of the dataset-only baselines (everything except `grad_stab`,
/// which needs an energy).
pub fn run_data_baseline(
    d: &EnvDataset,
    method: Method,
    k: usize,
    seed: u64,
) -> Option<Result<BaselineResult>> {
    Some(match method {
        Method::Lasso => lasso_select(d, k, 0.0),
        Method::ElasticNet => lasso_select(d, k, ELASTIC_NET_MIX),
        Method::Mi => mi_select(d, k, DEFAULT_BINS),
        Method::Rf => rf_select(
            d,
            k,
            &ForestConfig {
                seed,
                ..ForestConfig::default()
            },
        ),
        Method::Stabsel => stability_selection(d, k, stabsel::DEFAULT_SUBSAMPLES, seed),
        Method::Greedy => greedy_forward(d, k),
        Method::IcpOnly => icp_only(d, k),
        Method::GradStab => return None,
    })
}
