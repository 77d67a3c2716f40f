//! Per-operator network utility: a weighted sum of mean and cell-edge
//! user rate, plus the utility deltas that drive favor decisions.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::alloc::AllocationState;
use crate::operator::OperatorId;
use crate::radio::{user_rate, RadioError, RadioParams, Snapshot};
use crate::stats;

/// Weights of the linear utility. Operators may each use their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub w_mean: f64,
    pub w_edge: f64,
    /// Cell-edge percentile, nearest-rank, in (0, 50].
    pub edge_percentile: f64,
}

impl UtilityWeights {
    pub fn new(w_mean: f64, w_edge: f64, edge_percentile: f64) -> Result<Self, UtilityError> {
        if w_mean < 0.0 || w_edge < 0.0 {
            return Err(UtilityError::NegativeWeight);
        }
        if (w_mean + w_edge - 1.0).abs() > 1e-9 {
            return Err(UtilityError::WeightsNotNormalized(w_mean + w_edge));
        }
        if !(edge_percentile > 0.0 && edge_percentile <= 50.0) {
            return Err(UtilityError::BadPercentile(edge_percentile));
        }
        Ok(UtilityWeights {
            w_mean,
            w_edge,
            edge_percentile,
        })
    }

    /// Equal weight on mean and 5th-percentile rate.
    pub fn balanced() -> Self {
        UtilityWeights {
            w_mean: 0.5,
            w_edge: 0.5,
            edge_percentile: 5.0,
        }
    }
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights::balanced()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("utility weights must be nonnegative")]
    NegativeWeight,
    #[error("utility weights must sum to 1, got {0}")]
    WeightsNotNormalized(f64),
    #[error("edge percentile must be in (0, 50], got {0}")]
    BadPercentile(f64),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// Scalar QoS summary for one operator under one allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub operator: OperatorId,
    pub mean_rate_bps: f64,
    pub edge_rate_bps: f64,
    pub utility: f64,
}

impl fmt::Display for UtilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: mean {} edge {} utility {}",
            self.operator, self.mean_rate_bps, self.edge_rate_bps, self.utility
        )
    }
}

/// Utility of a rate sample: `w_mean * mean + w_edge * nearest-rank
/// percentile`. An operator with no active users has utility 0.
pub fn network_utility(
    operator: OperatorId,
    rates: &[f64],
    weights: &UtilityWeights,
) -> UtilityReport {
    if rates.is_empty() {
        return UtilityReport {
            operator,
            mean_rate_bps: 0.0,
            edge_rate_bps: 0.0,
            utility: 0.0,
        };
    }
    let mean = stats::mean(rates);
    let edge = stats::nearest_rank_percentile(rates, weights.edge_percentile);
    UtilityReport {
        operator,
        mean_rate_bps: mean,
        edge_rate_bps: edge,
        utility: weights.w_mean * mean + weights.w_edge * edge,
    }
}

/// Rates of one operator's users under `state`, in snapshot order.
pub fn operator_rates(
    operator: OperatorId,
    state: &AllocationState,
    snapshot: &Snapshot,
    radio: &RadioParams,
) -> Result<Vec<f64>, RadioError> {
    snapshot
        .users_of(operator)
        .map(|(user_index, _)| user_rate(snapshot, user_index, state, radio))
        .collect()
}

/// Current utility of one operator under `state`.
pub fn operator_utility(
    operator: OperatorId,
    state: &AllocationState,
    snapshot: &Snapshot,
    radio: &RadioParams,
    weights: &UtilityWeights,
) -> Result<UtilityReport, RadioError> {
    let rates = operator_rates(operator, state, snapshot, radio)?;
    Ok(network_utility(operator, &rates, weights))
}

/// Utility change for `operator` when moving from `state_now` to
/// `state_hyp` on the same snapshot: positive is a gain.
///
/// Both states are read-only; rates are recomputed for each.
pub fn utility_delta(
    operator: OperatorId,
    state_now: &AllocationState,
    state_hyp: &AllocationState,
    snapshot: &Snapshot,
    radio: &RadioParams,
    weights: &UtilityWeights,
) -> Result<f64, RadioError> {
    let now = operator_utility(operator, state_now, snapshot, radio, weights)?;
    let hyp = operator_utility(operator, state_hyp, snapshot, radio, weights)?;
    Ok(hyp.utility - now.utility)
}
