use super::{BaselineResult, Method};
use crate::data::EnvDataset;
use crate::error::Result;
use crate::icp::invariance_scores;

/// Top-k features by invariance score.
pub fn icp_only(d: &EnvDataset, k: usize) -> Result<BaselineResult> {
    BaselineResult::from_scores(Method::IcpOnly, invariance_scores(d)?.scores, k)
}
