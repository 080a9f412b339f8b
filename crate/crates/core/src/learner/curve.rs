use serde::{Deserialize, Serialize};

use crate::learner::histogram::ParamHistogram;
use crate::learner::{ClassWeights, LearnerConfig};
use crate::network::Class;
use crate::param::{ParamId, ParamSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    /// Grid offset from the current value (0 = current value).
    pub offset: i32,
    pub value: f64,
    pub tp: u32,
    pub fp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    pub tn: u32,
    /// Weighted errors fixed minus correct decisions broken by moving into this bin.
    pub benefit: f64,
    /// Sum of `benefit` from the current value out to this bin.
    pub cumulative: f64,
    /// Errors fixed from the current value out to this bin, FP and FN counted equally.
    pub fixed: u32,
}

/// Benefit and outward cumulative benefit for one parameter, bins ordered by offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitCurve {
    pub param: ParamId,
    pub origin: f64,
    pub bins: Vec<CurveBin>,
}

impl BenefitCurve {
    fn origin_slot(&self) -> usize {
        self.bins
            .iter()
            .position(|b| b.offset == 0)
            .expect("curve has an origin bin")
    }

    pub fn at(&self, offset: i32) -> Option<&CurveBin> {
        let o = self.origin_slot() as i64 + offset as i64;
        self.bins.get(usize::try_from(o).ok()?)
    }

    pub fn total_events(&self) -> u64 {
        self.bins
            .iter()
            .map(|b| (b.tp + b.fp + b.fn_ + b.tn) as u64)
            .sum()
    }

    pub fn max_cumulative(&self) -> f64 {
        self.bins.iter().map(|b| b.cumulative).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bins ordered by distance from the current value, lower side first on ties.
    fn outward(&self) -> Vec<&CurveBin> {
        let mut v: Vec<&CurveBin> = self.bins.iter().collect();
        v.sort_by(|a, b| {
            let da = (a.value - self.origin).abs();
            let db = (b.value - self.origin).abs();
            da.total_cmp(&db).then(a.offset.cmp(&b.offset))
        });
        v
    }
}

/// Combine the class histograms bin-wise and integrate outward from the current value.
///
/// Moving a parameter into a bin flips every blamed decision there: FP becomes
/// TN (gain `w_fp`), FN becomes TP (gain `w_fn`), TP becomes FN (loss `w_fn`),
/// TN becomes FP (loss `w_fp`).
pub fn benefit_curve(h: &ParamHistogram, w: &ClassWeights) -> BenefitCurve {
    let g = h.grid();
    let mut bins: Vec<CurveBin> = (-(g.n_neg() as i32)..=g.n_pos() as i32)
        .map(|k| {
            let (tp, fp, fn_, tn) = (
                h.count(Class::TP, k),
                h.count(Class::FP, k),
                h.count(Class::FN, k),
                h.count(Class::TN, k),
            );
            let benefit = w.w_fp * fp as f64 + w.w_fn * fn_ as f64
                - w.w_fn * tp as f64
                - w.w_fp * tn as f64;
            CurveBin {
                offset: k,
                value: g.value_at(k),
                tp,
                fp,
                fn_,
                tn,
                benefit,
                cumulative: 0.0,
                fixed: 0,
            }
        })
        .collect();
    let origin = g.n_neg() as usize;
    for side in [1i64, -1] {
        let (mut c, mut f) = (0.0, 0u32);
        let mut i = origin as i64 + side;
        while i >= 0 && (i as usize) < bins.len() {
            let b = &mut bins[i as usize];
            c += b.benefit;
            f += b.fp + b.fn_;
            b.cumulative = c;
            b.fixed = f;
            i += side;
        }
    }
    BenefitCurve {
        param: h.param,
        origin: g.origin(),
        bins,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueProposal {
    pub offset: i32,
    pub value: f64,
    pub predicted_benefit: f64,
    pub fixed_count: u32,
}

/// Closest value reaching `update_fraction` of the best cumulative benefit,
/// provided it fixes at least `min_fix` errors.
pub fn propose_update(curve: &BenefitCurve, p: &ParamSpec, cfg: &LearnerConfig) -> Option<ValueProposal> {
    let best = curve.max_cumulative();
    if best <= 0.0 {
        return None;
    }
    let bar = cfg.update_fraction * best;
    let chosen = curve
        .outward()
        .into_iter()
        .find(|b| b.offset != 0 && b.cumulative >= bar)?;
    if chosen.fixed < cfg.min_fix || !p.in_bounds(chosen.value) {
        return None;
    }
    Some(ValueProposal {
        offset: chosen.offset,
        value: chosen.value,
        predicted_benefit: chosen.cumulative,
        fixed_count: chosen.fixed,
    })
}

/// Re-estimate the one-sided tolerances from how quickly the cumulative benefit
/// falls away from its peak. Sides without a qualifying drop keep their tolerance.
pub fn propose_tolerance(curve: &BenefitCurve, p: &ParamSpec, cfg: &LearnerConfig) -> Option<(f64, f64)> {
    if curve.total_events() < cfg.min_fix as u64 {
        return None;
    }
    let best = curve.max_cumulative();
    let peak = curve
        .outward()
        .into_iter()
        .find(|b| b.cumulative == best)?;
    let pi = curve.bins.iter().position(|b| b.offset == peak.offset)?;

    let edge = |side: &[CurveBin]| -> Option<f64> {
        // `side` is ordered moving away from the peak
        let low = side.iter().map(|b| b.cumulative).fold(f64::INFINITY, f64::min);
        let range = peak.cumulative - low;
        if range <= 0.0 {
            return None;
        }
        let drop_to = cfg.tolerance_fraction * range;
        side.iter()
            .find(|b| peak.cumulative - b.cumulative >= drop_to)
            .map(|b| cfg.tolerance_factor * (b.value - peak.value).abs())
    };
    let below: Vec<CurveBin> = curve.bins[..pi].iter().rev().cloned().collect();
    let above: Vec<CurveBin> = curve.bins[pi + 1..].to_vec();
    let new_neg = edge(&below);
    let new_pos = edge(&above);
    if new_neg.is_none() && new_pos.is_none() {
        return None;
    }
    let floor: f64 = if p.is_integer() { 1.0 } else { 0.0 };
    let fix = |t: Option<f64>, old: f64| t.filter(|t| *t > 0.0).map(|t| t.max(floor)).unwrap_or(old);
    let out = (fix(new_neg, p.tol_neg), fix(new_pos, p.tol_pos));
    (out != (p.tol_neg, p.tol_pos)).then_some(out)
}
