use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::curve::{benefit_curve, propose_tolerance, propose_update, BenefitCurve};
use crate::learner::histogram::{accumulate, AccumulateError};
use crate::learner::LearnerConfig;
use crate::network::{eval_dataset, DecisionLog, ErrorSummary, EvalError, Frame, NetworkError, NetworkSpec};
use crate::param::ParamId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuneError {
    #[error("invalid learner config: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Accumulate(#[from] AccumulateError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A change proposed for one parameter in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamUpdate {
    pub param: ParamId,
    pub name: String,
    pub old_value: f64,
    pub new_value: f64,
    pub old_tol: (f64, f64),
    pub new_tol: (f64, f64),
    /// Cumulative benefit at the new value.
    pub predicted_benefit: f64,
    pub fixed_count: u32,
}

impl ParamUpdate {
    pub fn value_changed(&self) -> bool {
        self.old_value != self.new_value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub before: ErrorSummary,
    pub after: ErrorSummary,
    pub curves: Vec<BenefitCurve>,
    pub updates: Vec<ParamUpdate>,
    pub vetoed: Vec<ParamId>,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best_round: u32,
    pub best_network: NetworkSpec,
    pub best_error: f64,
    pub initial: ErrorSummary,
    pub history: Vec<RoundReport>,
    /// Network after each round; index 0 is the starting network.
    pub networks: Vec<NetworkSpec>,
}

fn prepare(net: &NetworkSpec, cfg: &LearnerConfig) -> Result<NetworkSpec, TuneError> {
    cfg.validate().map_err(TuneError::Config)?;
    Ok(match cfg.bins_per_side {
        Some(b) if b != net.bins_per_side() => net.with_bins_per_side(b),
        _ => net.clone(),
    })
}

/// Curves and proposals from one evaluation, all applied at once.
fn propose(
    net: &NetworkSpec,
    log: &DecisionLog,
    cfg: &LearnerConfig,
    vetoes: &BTreeSet<ParamId>,
) -> Result<(Vec<BenefitCurve>, Vec<ParamUpdate>, NetworkSpec), TuneError> {
    let hists = accumulate(log, net)?;
    let mut next = net.clone();
    let mut curves = Vec::with_capacity(hists.entries.len());
    let mut updates = Vec::new();
    for h in &hists.entries {
        let curve = benefit_curve(h, &cfg.weights);
        let id = h.param;
        if !vetoes.contains(&id) {
            let p = net.param(id);
            let value = propose_update(&curve, p, cfg);
            // tolerances are re-estimated only alongside an accepted value move
            let tol = value.as_ref().and_then(|_| propose_tolerance(&curve, p, cfg));
            if let Some(v) = &value {
                let mut spec = p.clone();
                spec.value = v.value;
                if let Some((n, q)) = tol {
                    spec.tol_neg = n;
                    spec.tol_pos = q;
                }
                next = next.with_param_spec(id, spec.clone())?;
                updates.push(ParamUpdate {
                    param: id,
                    name: net.param_name(id).to_string(),
                    old_value: p.value,
                    new_value: spec.value,
                    old_tol: (p.tol_neg, p.tol_pos),
                    new_tol: (spec.tol_neg, spec.tol_pos),
                    predicted_benefit: v.predicted_benefit,
                    fixed_count: v.fixed_count,
                });
            }
        }
        curves.push(curve);
    }
    Ok((curves, updates, next))
}

/// One evaluate-histogram-update pass. Returns the report and the updated network.
pub fn tune_round(
    net: &NetworkSpec,
    frames: &[Frame],
    cfg: &LearnerConfig,
    vetoes: &BTreeSet<ParamId>,
) -> Result<(RoundReport, NetworkSpec), TuneError> {
    let net = prepare(net, cfg)?;
    let log = eval_dataset(&net, frames)?;
    let before = log.summary(&cfg.weights);
    let (curves, updates, next) = propose(&net, &log, cfg, vetoes)?;
    let after = if updates.is_empty() {
        before
    } else {
        eval_dataset(&next, frames)?.summary(&cfg.weights)
    };
    Ok((
        RoundReport {
            round: 1,
            before,
            after,
            curves,
            updates,
            vetoed: vetoes.iter().copied().collect(),
        },
        next,
    ))
}

/// Run rounds until none proposes a change or `max_rounds` is reached, and keep
/// the network with the lowest weighted training error (the start on ties).
pub fn tune(net: &NetworkSpec, frames: &[Frame], cfg: &LearnerConfig) -> Result<TuneResult, TuneError> {
    let mut cur = prepare(net, cfg)?;
    let mut log = eval_dataset(&cur, frames)?;
    let initial = log.summary(&cfg.weights);
    let mut best = (0u32, initial.weighted_error);
    let mut networks = vec![cur.clone()];
    let mut history = Vec::new();
    let none = BTreeSet::new();
    for round in 1..=cfg.max_rounds {
        let before = log.summary(&cfg.weights);
        let (curves, updates, next) = propose(&cur, &log, cfg, &none)?;
        if updates.is_empty() {
            break;
        }
        log = eval_dataset(&next, frames)?;
        let after = log.summary(&cfg.weights);
        if after.weighted_error < best.1 {
            best = (round, after.weighted_error);
        }
        history.push(RoundReport {
            round,
            before,
            after,
            curves,
            updates,
            vetoed: Vec::new(),
        });
        networks.push(next.clone());
        cur = next;
    }
    Ok(TuneResult {
        best_round: best.0,
        best_network: networks[best.0 as usize].clone(),
        best_error: best.1,
        initial,
        history,
        networks,
    })
}
