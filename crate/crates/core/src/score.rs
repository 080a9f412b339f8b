//! Graded threshold units and min/max logic that carry a single suspect parameter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param::{Grid, ParamId, ParamSpec};

/// Largest double strictly below one half. Used where a decision must be false
/// although the ramp sits exactly on the boundary.
pub const JUST_BELOW_HALF: f64 = 0.499_999_999_999_999_94;

/// The parameter blamed for a decision and the value that would flip it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub param: ParamId,
    /// Value of the parameter when the attribution was made.
    pub from: f64,
    pub alternate: f64,
    /// Distance of the blamed unit's score from 0.5; smaller is more defeasible.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub s: f64,
    pub attribution: Option<Attribution>,
}

impl Score {
    pub const TRUE: Score = Score {
        s: 1.0,
        attribution: None,
    };
    pub const FALSE: Score = Score {
        s: 0.0,
        attribution: None,
    };

    pub fn new(s: f64) -> Self {
        Score {
            s,
            attribution: None,
        }
    }

    pub fn with_attribution(mut self, a: Attribution) -> Self {
        self.attribution = Some(a);
        self
    }

    #[inline]
    pub fn decision(&self) -> bool {
        self.s >= 0.5
    }

    pub fn is_saturated(&self) -> bool {
        self.s <= 0.0 || self.s >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("non-finite input value {0}")]
    NonFinite(f64),
    #[error("gate has no inputs")]
    EmptyGate,
}

/// A parameter bound to its id in a network and the bin resolution used for alternates.
#[derive(Debug, Clone, Copy)]
pub struct ParamRef<'a> {
    pub id: ParamId,
    pub spec: &'a ParamSpec,
    pub bins: u32,
}

impl<'a> ParamRef<'a> {
    pub fn new(id: ParamId, spec: &'a ParamSpec, bins: u32) -> Self {
        ParamRef { id, spec, bins }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.spec, self.bins)
    }

    pub fn value(&self) -> f64 {
        self.spec.value
    }

    pub(crate) fn attribution(&self, alternate: f64, margin: f64) -> Attribution {
        Attribution {
            param: self.id,
            from: self.spec.value,
            alternate,
            margin,
        }
    }

    /// Candidate for a structural (integer) parameter moved to `alt`, scored by
    /// its own ramp. `None` when the move is outside tolerance or hard bounds.
    pub(crate) fn move_candidate(&self, alt: f64) -> Option<Attribution> {
        if !self.spec.in_bounds(alt) {
            return None;
        }
        let margin = self.spec.move_margin(alt)?;
        Some(self.attribution(alt, margin))
    }
}

/// Keep the decision implied by the raw comparison even where the ramp rounds
/// across 0.5.
fn settle(s: f64, decision: bool) -> f64 {
    match (decision, s >= 0.5) {
        (true, false) => 0.5,
        (false, true) => JUST_BELOW_HALF,
        _ => s,
    }
}

fn finish(p: ParamRef<'_>, s: f64, alt_offset: impl FnOnce(&Grid) -> Option<i32>) -> Score {
    let mut out = Score::new(s);
    if s > 0.0 && s < 1.0 {
        let grid = p.grid();
        if let Some(k) = alt_offset(&grid) {
            let alt = grid.value_at(k);
            if p.spec.in_bounds(alt) {
                out.attribution = Some(p.attribution(alt, (s - 0.5).abs()));
            }
        }
    }
    out
}

/// Soft "x at or above threshold" test.
pub fn eval_threshold_above(x: f64, p: ParamRef<'_>) -> Result<Score, ScoreError> {
    if !x.is_finite() {
        return Err(ScoreError::NonFinite(x));
    }
    let v = p.value();
    let decision = x >= v;
    let s = settle(p.spec.ramp(x - v), decision);
    Ok(finish(p, s, |g| {
        if decision {
            g.first_above(x)
        } else {
            g.first_at_or_below(x)
        }
    }))
}

/// Soft "x strictly below limit" test.
pub fn eval_threshold_below(x: f64, p: ParamRef<'_>) -> Result<Score, ScoreError> {
    if !x.is_finite() {
        return Err(ScoreError::NonFinite(x));
    }
    let v = p.value();
    let decision = x < v;
    let tol = if x >= v { p.spec.tol_pos } else { p.spec.tol_neg };
    let s = settle((0.5 + 0.5 * (v - x) / tol).clamp(0.0, 1.0), decision);
    Ok(finish(p, s, |g| {
        if decision {
            g.first_at_or_below(x)
        } else {
            g.first_above(x)
        }
    }))
}

/// Fuzzy AND (minimum). The suspect is the weakest input when the result holds;
/// when it fails, only a single failing input can be blamed.
pub fn gate_and(inputs: &[Score]) -> Result<Score, ScoreError> {
    and_over(inputs.iter().copied()).ok_or(ScoreError::EmptyGate)
}

/// Fuzzy OR (maximum). The suspect is the strongest input when the result fails;
/// when it holds, only a single passing input can be blamed.
pub fn gate_or(inputs: &[Score]) -> Result<Score, ScoreError> {
    or_over(inputs.iter().copied()).ok_or(ScoreError::EmptyGate)
}

pub(crate) fn and_over(inputs: impl Iterator<Item = Score>) -> Option<Score> {
    let mut weakest: Option<Score> = None;
    let mut n_false = 0usize;
    let mut last_false: Option<Score> = None;
    for sc in inputs {
        if !sc.decision() {
            n_false += 1;
            last_false = Some(sc);
        }
        // strict comparison keeps the lowest index on ties
        if weakest.is_none_or(|w| sc.s < w.s) {
            weakest = Some(sc);
        }
    }
    let weakest = weakest?;
    let attribution = if weakest.decision() {
        weakest.attribution
    } else if n_false == 1 {
        last_false.and_then(|f| f.attribution)
    } else {
        None
    };
    Some(Score {
        s: weakest.s,
        attribution,
    })
}

pub(crate) fn or_over(inputs: impl Iterator<Item = Score>) -> Option<Score> {
    let mut strongest: Option<Score> = None;
    let mut n_true = 0usize;
    let mut last_true: Option<Score> = None;
    for sc in inputs {
        if sc.decision() {
            n_true += 1;
            last_true = Some(sc);
        }
        if strongest.is_none_or(|w| sc.s > w.s) {
            strongest = Some(sc);
        }
    }
    let strongest = strongest?;
    let attribution = if !strongest.decision() {
        strongest.attribution
    } else if n_true == 1 {
        last_true.and_then(|t| t.attribution)
    } else {
        None
    };
    Some(Score {
        s: strongest.s,
        attribution,
    })
}
