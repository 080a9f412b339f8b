//! Units that combine many objects (count-at-least-N), summarize sample
//! distributions (fraction below a cut), and count pixels in tunable rectangles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{eval_threshold_above, Attribution, ParamRef, Score, ScoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("no samples to summarize")]
    NoSamples,
    #[error("region [{x0},{x1})x[{y0},{y1}) does not fit a {w}x{h} mask")]
    RegionOutsideMask {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        w: usize,
        h: usize,
    },
    #[error("mask rows do not match declared size {w}x{h}: {reason}")]
    BadMask { w: usize, h: usize, reason: String },
}

/// Require at least `N` of the candidates to be true.
///
/// The score is the N-th highest candidate score. The suspect is inherited from
/// the N-th ranked candidate when flipping that candidate alone flips the
/// count; otherwise N itself is blamed with the count that would flip the result.
pub fn count_at_least(candidates: &[Score], n: ParamRef<'_>) -> Score {
    let need = n.value().max(0.0) as usize;
    let mut ranked: Vec<&Score> = candidates.iter().collect();
    // stable: equal scores keep input order
    ranked.sort_by(|a, b| b.s.total_cmp(&a.s));
    let n_true = candidates.iter().filter(|c| c.decision()).count();
    let s = match need {
        0 => 1.0,
        k if k <= ranked.len() => ranked[k - 1].s,
        _ => 0.0,
    };
    let decision = n_true >= need;

    let pivotal = need >= 1
        && need <= ranked.len()
        && (if decision { n_true == need } else { n_true + 1 == need });
    let chain = pivotal.then(|| ranked[need - 1].attribution).flatten();

    let alt = if decision { n_true + 1 } else { n_true };
    let structural = (alt >= 1).then(|| n.move_candidate(alt as f64)).flatten();

    let attribution = match (chain, structural) {
        (Some(c), Some(t)) => Some(Attribution {
            margin: c.margin.min(t.margin),
            ..c
        }),
        (c, t) => c.or(t),
    };
    Score { s, attribution }
}

/// Percentage of samples strictly below `cut`, tested against a soft threshold.
pub fn fraction_below(samples: &[f64], cut: f64, p: ParamRef<'_>) -> Result<Score, AggregateError> {
    if samples.is_empty() {
        return Err(AggregateError::NoSamples);
    }
    if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(ScoreError::NonFinite(bad).into());
    }
    let below = samples.iter().filter(|&&v| v < cut).count();
    let pct = 100.0 * below as f64 / samples.len() as f64;
    Ok(eval_threshold_above(pct, p)?)
}

/// Binary occupancy grid with per-column and per-row running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGrid {
    w: usize,
    h: usize,
    bits: Vec<bool>,
    // col_cum[x * (h + 1) + y] = set pixels in column x with row < y
    col_cum: Vec<u32>,
    // row_cum[y * (w + 1) + x] = set pixels in row y with column < x
    row_cum: Vec<u32>,
}

impl MaskGrid {
    pub fn new(w: usize, h: usize, bits: Vec<bool>) -> Result<Self, AggregateError> {
        if bits.len() != w * h {
            return Err(AggregateError::BadMask {
                w,
                h,
                reason: format!("expected {} cells, got {}", w * h, bits.len()),
            });
        }
        let mut col_cum = vec![0u32; w * (h + 1)];
        let mut row_cum = vec![0u32; h * (w + 1)];
        for y in 0..h {
            for x in 0..w {
                let b = bits[y * w + x] as u32;
                col_cum[x * (h + 1) + y + 1] = col_cum[x * (h + 1) + y] + b;
                row_cum[y * (w + 1) + x + 1] = row_cum[y * (w + 1) + x] + b;
            }
        }
        Ok(MaskGrid {
            w,
            h,
            bits,
            col_cum,
            row_cum,
        })
    }

    pub fn empty(w: usize, h: usize) -> Self {
        Self::new(w, h, vec![false; w * h]).expect("sizes agree")
    }

    /// Decode rows of alternating run lengths, each row starting with a run of zeros.
    pub fn from_runs(w: usize, h: usize, rows: &[Vec<u32>]) -> Result<Self, AggregateError> {
        if rows.len() != h {
            return Err(AggregateError::BadMask {
                w,
                h,
                reason: format!("{} rows", rows.len()),
            });
        }
        let mut bits = Vec::with_capacity(w * h);
        for (y, row) in rows.iter().enumerate() {
            let start = bits.len();
            for (i, &run) in row.iter().enumerate() {
                bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
            }
            if bits.len() - start != w {
                return Err(AggregateError::BadMask {
                    w,
                    h,
                    reason: format!("row {y} has {} cells", bits.len() - start),
                });
            }
        }
        Self::new(w, h, bits)
    }

    pub fn to_runs(&self) -> Vec<Vec<u32>> {
        (0..self.h)
            .map(|y| {
                let mut runs = Vec::new();
                let mut cur = false;
                let mut len = 0u32;
                for x in 0..self.w {
                    let b = self.get(x, y);
                    if b != cur {
                        runs.push(len);
                        cur = b;
                        len = 0;
                    }
                    len += 1;
                }
                runs.push(len);
                runs
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.w + x]
    }

    /// Set pixels in column `x` over rows `[y0, y1)`.
    pub fn col_sum(&self, x: usize, y0: usize, y1: usize) -> u32 {
        let base = x * (self.h + 1);
        self.col_cum[base + y1] - self.col_cum[base + y0]
    }

    /// Set pixels in row `y` over columns `[x0, x1)`.
    pub fn row_sum(&self, y: usize, x0: usize, x1: usize) -> u32 {
        let base = y * (self.w + 1);
        self.row_cum[base + x1] - self.row_cum[base + x0]
    }

    pub fn column_projection(&self) -> Vec<u32> {
        (0..self.w).map(|x| self.col_sum(x, 0, self.h)).collect()
    }

    pub fn row_projection(&self) -> Vec<u32> {
        (0..self.h).map(|y| self.row_sum(y, 0, self.w)).collect()
    }

    /// Set pixels in the half-open rectangle `[x0, x1) x [y0, y1)`.
    pub fn count(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> u32 {
        (x0..x1).map(|x| self.col_sum(x, y0, y1)).sum()
    }
}

/// Rectangle with four tunable integer bounds and a soft threshold on its pixel count.
#[derive(Debug, Clone, Copy)]
pub struct RegionSpec<'a> {
    pub x0: ParamRef<'a>,
    pub x1: ParamRef<'a>,
    pub y0: ParamRef<'a>,
    pub y1: ParamRef<'a>,
    pub threshold: ParamRef<'a>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Edge {
    Low,
    High,
}

/// Count pixels inside the region and test the count against the threshold.
///
/// Besides the threshold itself, each bound is a candidate suspect: the
/// nearest shift of that bound that moves the count across the threshold is
/// scored by the bound's own ramp, and the smallest margin wins (ties in the
/// order threshold, x0, x1, y0, y1).
pub fn region_count(mask: &MaskGrid, r: &RegionSpec<'_>) -> Result<Score, AggregateError> {
    let (w, h) = (mask.width(), mask.height());
    let (fx0, fx1, fy0, fy1) = (r.x0.value(), r.x1.value(), r.y0.value(), r.y1.value());
    let fits = |lo: f64, hi: f64, max: usize| {
        lo >= 0.0 && lo < hi && hi <= max as f64 && lo.fract() == 0.0 && hi.fract() == 0.0
    };
    if !fits(fx0, fx1, w) || !fits(fy0, fy1, h) {
        return Err(AggregateError::RegionOutsideMask {
            x0: fx0,
            x1: fx1,
            y0: fy0,
            y1: fy1,
            w,
            h,
        });
    }
    let (x0, x1, y0, y1) = (fx0 as usize, fx1 as usize, fy0 as usize, fy1 as usize);
    let count = mask.count(x0, x1, y0, y1);
    let base = eval_threshold_above(count as f64, r.threshold)?;
    let decision = base.decision();
    let thr = r.threshold.value();
    let crosses = |c: i64| ((c as f64) >= thr) != decision;

    let col = |x: usize| mask.col_sum(x, y0, y1) as i64;
    let row = |y: usize| mask.row_sum(y, x0, x1) as i64;
    let candidates = [
        base.attribution,
        bound_candidate(r.x0, Edge::Low, x0, x1, w, count, decision, &col, &crosses),
        bound_candidate(r.x1, Edge::High, x1, x0, w, count, decision, &col, &crosses),
        bound_candidate(r.y0, Edge::Low, y0, y1, h, count, decision, &row, &crosses),
        bound_candidate(r.y1, Edge::High, y1, y0, h, count, decision, &row, &crosses),
    ];
    let mut best: Option<Attribution> = None;
    for c in candidates.into_iter().flatten() {
        if best.is_none_or(|b| c.margin < b.margin) {
            best = Some(c);
        }
    }
    Ok(Score {
        s: base.s,
        attribution: best,
    })
}

/// Nearest shift of one bound that carries the count across the threshold.
/// `pos` is the bound, `other` the opposite bound on the same axis, and
/// `line(i)` the in-region pixel count of column/row `i`.
#[allow(clippy::too_many_arguments)]
fn bound_candidate(
    p: ParamRef<'_>,
    edge: Edge,
    pos: usize,
    other: usize,
    extent: usize,
    count: u32,
    decision: bool,
    line: &dyn Fn(usize) -> i64,
    crosses: &dyn Fn(i64) -> bool,
) -> Option<Attribution> {
    // true -> shrink the region, false -> grow it
    let shrink = decision;
    let step: i64 = match (edge, shrink) {
        (Edge::Low, true) | (Edge::High, false) => 1,
        (Edge::Low, false) | (Edge::High, true) => -1,
    };
    let tol = if step > 0 { p.spec.tol_pos } else { p.spec.tol_neg };
    let mut c = count as i64;
    let mut k: i64 = 1;
    while (k as f64) < tol {
        let new_pos = pos as i64 + step * k;
        let valid = match edge {
            Edge::Low => new_pos >= 0 && new_pos < other as i64,
            Edge::High => new_pos <= extent as i64 && new_pos > other as i64,
        };
        if !valid {
            return None;
        }
        // line entering or leaving the region with this step
        let touched = match (edge, shrink) {
            (Edge::Low, true) => new_pos - 1,
            (Edge::Low, false) => new_pos,
            (Edge::High, true) => new_pos,
            (Edge::High, false) => new_pos - 1,
        } as usize;
        c += if shrink { -line(touched) } else { line(touched) };
        if crosses(c) {
            return p.move_candidate(new_pos as f64);
        }
        k += 1;
    }
    None
}

/// Serialized form of a mask: width, height, and run-length rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDoc {
    pub w: usize,
    pub h: usize,
    pub bits: Vec<Vec<u32>>,
}

impl TryFrom<MaskDoc> for MaskGrid {
    type Error = AggregateError;

    fn try_from(d: MaskDoc) -> Result<Self, Self::Error> {
        MaskGrid::from_runs(d.w, d.h, &d.bits)
    }
}

impl From<&MaskGrid> for MaskDoc {
    fn from(m: &MaskGrid) -> Self {
        MaskDoc {
            w: m.width(),
            h: m.height(),
            bits: m.to_runs(),
        }
    }
}
