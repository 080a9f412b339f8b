//! CSV export of benefit curves and per-round update summaries.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::learner::curve::BenefitCurve;
use crate::learner::tune::RoundReport;
use crate::network::NetworkSpec;

/// One row of a curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub param: String,
    pub bin: i32,
    pub value: f64,
    pub tp: u32,
    pub fp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    pub tn: u32,
    pub benefit: f64,
    pub cumulative: f64,
    pub fixed: u32,
}

/// One row of an update summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: u32,
    pub param: String,
    pub old_value: f64,
    pub new_value: f64,
    pub predicted_benefit: Option<f64>,
    pub fixed_count: Option<u32>,
    pub old_tol_neg: f64,
    pub old_tol_pos: f64,
    pub new_tol_neg: f64,
    pub new_tol_pos: f64,
    pub applied: bool,
}

pub fn curve_rows(net: &NetworkSpec, curves: &[BenefitCurve]) -> Vec<CurveRow> {
    curves
        .iter()
        .flat_map(|c| {
            let name = net.param_name(c.param).to_string();
            c.bins.iter().map(move |b| CurveRow {
                param: name.clone(),
                bin: b.offset,
                value: b.value,
                tp: b.tp,
                fp: b.fp,
                fn_: b.fn_,
                tn: b.tn,
                benefit: b.benefit,
                cumulative: b.cumulative,
                fixed: b.fixed,
            })
        })
        .collect()
}

/// Rows for every parameter in a round; parameters left alone appear with `applied = false`.
pub fn summary_rows(net: &NetworkSpec, report: &RoundReport) -> Vec<SummaryRow> {
    net.param_ids()
        .map(|id| {
            let p = net.param(id);
            let up = report.updates.iter().find(|u| u.param == id);
            SummaryRow {
                round: report.round,
                param: net.param_name(id).to_string(),
                old_value: p.value,
                new_value: up.map_or(p.value, |u| u.new_value),
                predicted_benefit: up.map(|u| u.predicted_benefit),
                fixed_count: up.map(|u| u.fixed_count),
                old_tol_neg: p.tol_neg,
                old_tol_pos: p.tol_pos,
                new_tol_neg: up.map_or(p.tol_neg, |u| u.new_tol.0),
                new_tol_pos: up.map_or(p.tol_pos, |u| u.new_tol.1),
                applied: up.is_some(),
            }
        })
        .collect()
}

pub fn write_rows<T: Serialize>(w: impl Write, rows: &[T]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(r: impl Read) -> csv::Result<Vec<T>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{benefit_curve, ClassWeights, ParamHistogram};
    use crate::network::{sample_network, Class};

    #[test]
    fn curve_csv_round_trips() {
        let net = sample_network();
        let id = net.param_id("pair_n").unwrap();
        let mut h = ParamHistogram::new(id, net.param(id).clone(), net.bins_per_side());
        h.add_at(Class::FP, 1, 3);
        h.add_at(Class::TN, -1, 2);
        let c = benefit_curve(&h, &ClassWeights::default());
        let rows = curve_rows(&net, &[c]);
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("param,bin,value,tp,fp,fn,tn,benefit,cumulative,fixed"));
        let back: Vec<CurveRow> = read_rows(&buf[..]).unwrap();
        assert_eq!(back, rows);
    }
}
