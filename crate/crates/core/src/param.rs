//! Tunable parameters and the alternate-value grid shared by the evaluator and the learner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a parameter in its network's parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub u32);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    #[default]
    Real,
    Integer,
}

/// One tunable parameter: its current value, the one-sided tolerance widths
/// over which adjusting it is considered reasonable, and hard bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub value: f64,
    pub tol_neg: f64,
    pub tol_pos: f64,
    #[serde(default)]
    pub kind: ParamKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("tolerances must be positive and finite (tol_neg={tol_neg}, tol_pos={tol_pos})")]
    Tolerance { tol_neg: f64, tol_pos: f64 },
    #[error("value {value} outside hard bounds [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },
    #[error("integer parameter has non-integral {what} {got}")]
    NotIntegral { what: &'static str, got: f64 },
    #[error("integer parameter tolerances must be at least 1 (tol_neg={tol_neg}, tol_pos={tol_pos})")]
    IntegerTolerance { tol_neg: f64, tol_pos: f64 },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
}

impl ParamSpec {
    pub fn real(value: f64, tol: f64) -> Self {
        ParamSpec {
            value,
            tol_neg: tol,
            tol_pos: tol,
            kind: ParamKind::Real,
            lo: f64::MIN,
            hi: f64::MAX,
        }
    }

    pub fn integer(value: i64, tol: f64) -> Self {
        ParamSpec {
            value: value as f64,
            tol_neg: tol,
            tol_pos: tol,
            kind: ParamKind::Integer,
            lo: 0.0,
            hi: f64::MAX,
        }
    }

    pub fn with_tolerances(mut self, tol_neg: f64, tol_pos: f64) -> Self {
        self.tol_neg = tol_neg;
        self.tol_pos = tol_pos;
        self
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn is_integer(&self) -> bool {
        self.kind == ParamKind::Integer
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (what, v) in [("value", self.value), ("lo", self.lo), ("hi", self.hi)] {
            if v.is_nan() {
                return Err(ParamError::NonFinite { what });
            }
        }
        if !(self.tol_neg > 0.0 && self.tol_pos > 0.0)
            || !self.tol_neg.is_finite()
            || !self.tol_pos.is_finite()
        {
            return Err(ParamError::Tolerance {
                tol_neg: self.tol_neg,
                tol_pos: self.tol_pos,
            });
        }
        if !(self.lo <= self.value && self.value <= self.hi) {
            return Err(ParamError::OutOfBounds {
                value: self.value,
                lo: self.lo,
                hi: self.hi,
            });
        }
        if self.is_integer() {
            for (what, v) in [("value", self.value), ("lo", self.lo), ("hi", self.hi)] {
                if v.is_finite() && v.abs() < 9.0e15 && v.fract() != 0.0 {
                    return Err(ParamError::NotIntegral { what, got: v });
                }
            }
            if self.tol_neg < 1.0 || self.tol_pos < 1.0 {
                return Err(ParamError::IntegerTolerance {
                    tol_neg: self.tol_neg,
                    tol_pos: self.tol_pos,
                });
            }
        }
        Ok(())
    }

    /// Snap a requested value to this parameter's kind (integers round to nearest).
    pub fn snap(&self, v: f64) -> f64 {
        match self.kind {
            ParamKind::Real => v,
            ParamKind::Integer => v.round(),
        }
    }

    pub fn in_bounds(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Tolerance that applies to a move from the current value towards `v`.
    pub fn tol_towards(&self, v: f64) -> f64 {
        if v >= self.value {
            self.tol_pos
        } else {
            self.tol_neg
        }
    }

    /// Linear ramp score for a signed distance in parameter units: 0.5 at zero,
    /// saturating at 0 and 1 one tolerance away on either side.
    pub fn ramp(&self, delta: f64) -> f64 {
        let tol = if delta >= 0.0 { self.tol_pos } else { self.tol_neg };
        (0.5 + 0.5 * delta / tol).clamp(0.0, 1.0)
    }

    /// Margin of a proposed move to `alt`: half the fraction of the applicable
    /// tolerance it consumes. `None` when the move is zero or reaches the tolerance edge.
    pub fn move_margin(&self, alt: f64) -> Option<f64> {
        let d = alt - self.value;
        if d == 0.0 {
            return None;
        }
        let m = 0.5 * d.abs() / self.tol_towards(alt);
        (m < 0.5).then_some(m)
    }
}

/// Discrete set of candidate values around a parameter's current value.
///
/// Offset `k` (negative below, positive above, 0 = current value) maps to
/// `value + k * step` on its side. Real parameters use a fixed number of bins
/// per side spanning the tolerance; integer parameters use one bin per integer.
/// Alternates reported by units are always grid values, so a histogram over the
/// grid accounts for every flip exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    origin: f64,
    step_neg: f64,
    step_pos: f64,
    n_neg: u32,
    n_pos: u32,
}

pub const DEFAULT_BINS_PER_SIDE: u32 = 64;

impl Grid {
    pub fn new(p: &ParamSpec, bins_per_side: u32) -> Self {
        match p.kind {
            ParamKind::Real => {
                let bins = bins_per_side.max(1);
                Grid {
                    origin: p.value,
                    step_neg: p.tol_neg / bins as f64,
                    step_pos: p.tol_pos / bins as f64,
                    n_neg: bins,
                    n_pos: bins,
                }
            }
            ParamKind::Integer => Grid {
                origin: p.value,
                step_neg: 1.0,
                step_pos: 1.0,
                n_neg: p.tol_neg.floor().max(0.0) as u32,
                n_pos: p.tol_pos.floor().max(0.0) as u32,
            },
        }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn n_neg(&self) -> u32 {
        self.n_neg
    }

    pub fn n_pos(&self) -> u32 {
        self.n_pos
    }

    /// Total number of bins including the origin.
    pub fn len(&self) -> usize {
        (self.n_neg + self.n_pos + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: i32) -> bool {
        k >= -(self.n_neg as i32) && k <= self.n_pos as i32
    }

    /// Position of offset `k` in a dense array of `len()` bins.
    pub fn slot(&self, k: i32) -> usize {
        (k + self.n_neg as i32) as usize
    }

    pub fn offset_of_slot(&self, slot: usize) -> i32 {
        slot as i32 - self.n_neg as i32
    }

    pub fn value_at(&self, k: i32) -> f64 {
        if k >= 0 {
            self.origin + k as f64 * self.step_pos
        } else {
            self.origin + k as f64 * self.step_neg
        }
    }

    /// Nearest grid offset for a value, if it falls inside the grid.
    pub fn offset_of(&self, v: f64) -> Option<i32> {
        if !v.is_finite() {
            return None;
        }
        let d = v - self.origin;
        let k = if d >= 0.0 {
            (d / self.step_pos).round()
        } else {
            (d / self.step_neg).round()
        };
        if k.abs() > i32::MAX as f64 {
            return None;
        }
        let k = k as i32;
        self.contains(k).then_some(k)
    }

    /// Smallest positive offset whose value lies strictly above `x`.
    pub fn first_above(&self, x: f64) -> Option<i32> {
        if self.n_pos == 0 {
            return None;
        }
        let est = ((x - self.origin) / self.step_pos).floor() + 1.0;
        let mut k = est.clamp(1.0, self.n_pos as f64) as i32;
        while k > 1 && self.value_at(k - 1) > x {
            k -= 1;
        }
        while k <= self.n_pos as i32 && self.value_at(k) <= x {
            k += 1;
        }
        (k <= self.n_pos as i32).then_some(k)
    }

    /// Negative offset closest to the origin whose value is at or below `x`.
    pub fn first_at_or_below(&self, x: f64) -> Option<i32> {
        if self.n_neg == 0 {
            return None;
        }
        let est = ((self.origin - x) / self.step_neg).ceil();
        let mut j = est.clamp(1.0, self.n_neg as f64) as i32;
        while j > 1 && self.value_at(-(j - 1)) <= x {
            j -= 1;
        }
        while j <= self.n_neg as i32 && self.value_at(-j) > x {
            j += 1;
        }
        (j <= self.n_neg as i32).then_some(-j)
    }
}
