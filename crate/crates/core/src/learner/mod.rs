//! Histogramming of blamed decisions against alternate values, benefit curves,
//! gated parameter and tolerance updates, and the multi-round tuning loop.

mod curve;
mod histogram;
pub mod report;
mod tune;

use serde::{Deserialize, Serialize};

pub use crate::network::{classify, Class};
pub use curve::{benefit_curve, propose_tolerance, propose_update, BenefitCurve, CurveBin, ValueProposal};
pub use histogram::{accumulate, AccumulateError, ParamHistogram, ParamHistograms};
pub use tune::{tune, tune_round, ParamUpdate, RoundReport, TuneError, TuneResult};

/// Relative cost of the two error classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassWeights {
    pub w_fp: f64,
    pub w_fn: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            w_fp: 1.0,
            w_fn: 1.0,
        }
    }
}

impl ClassWeights {
    pub fn new(w_fp: f64, w_fn: f64) -> Self {
        ClassWeights { w_fp, w_fn }
    }

    pub fn weighted_error(&self, fp: usize, fn_: usize) -> f64 {
        self.w_fp * fp as f64 + self.w_fn * fn_ as f64
    }

    pub fn is_valid(&self) -> bool {
        self.w_fp > 0.0 && self.w_fn > 0.0 && self.w_fp.is_finite() && self.w_fn.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub weights: ClassWeights,
    /// Minimum number of errors an update must fix (FP and FN counted equally).
    pub min_fix: u32,
    pub max_rounds: u32,
    /// Bins per side for real parameters; `None` keeps the network's setting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins_per_side: Option<u32>,
    /// Pick the closest bin reaching this fraction of the best cumulative benefit.
    pub update_fraction: f64,
    /// A tolerance edge is where the cumulative benefit has fallen by this
    /// fraction of its range on that side of the peak.
    pub tolerance_fraction: f64,
    /// New tolerance = factor x distance from peak to the edge.
    pub tolerance_factor: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            weights: ClassWeights::default(),
            min_fix: 10,
            max_rounds: 10,
            bins_per_side: None,
            update_fraction: 0.9,
            tolerance_fraction: 0.9,
            tolerance_factor: 2.5,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.weights.is_valid() {
            return Err("class weights must be positive".into());
        }
        if self.max_rounds < 1 {
            return Err("max_rounds must be at least 1".into());
        }
        if !(self.update_fraction > 0.0 && self.update_fraction <= 1.0) {
            return Err("update_fraction must lie in (0, 1]".into());
        }
        if !(self.tolerance_fraction > 0.0 && self.tolerance_fraction <= 1.0) {
            return Err("tolerance_fraction must lie in (0, 1]".into());
        }
        if !(self.tolerance_factor > 0.0 && self.tolerance_factor.is_finite()) {
            return Err("tolerance_factor must be positive".into());
        }
        if self.bins_per_side == Some(0) {
            return Err("bins_per_side must be positive".into());
        }
        Ok(())
    }
}
