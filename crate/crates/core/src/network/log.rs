//! Per-frame decision records.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::learner::ClassWeights;
use crate::network::NetworkSpec;
use crate::score::Attribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    TP,
    FP,
    FN,
    TN,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::TP, Class::FP, Class::FN, Class::TN];

    pub fn as_str(self) -> &'static str {
        match self {
            Class::TP => "TP",
            Class::FP => "FP",
            Class::FN => "FN",
            Class::TN => "TN",
        }
    }

    pub fn is_error(self) -> bool {
        matches!(self, Class::FP | Class::FN)
    }
}

impl std::str::FromStr for Class {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TP" => Ok(Class::TP),
            "FP" => Ok(Class::FP),
            "FN" => Ok(Class::FN),
            "TN" => Ok(Class::TN),
            _ => Err(format!("unknown class `{s}`")),
        }
    }
}

pub fn classify(decision: bool, label: bool) -> Class {
    match (decision, label) {
        (true, true) => Class::TP,
        (true, false) => Class::FP,
        (false, true) => Class::FN,
        (false, false) => Class::TN,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Position of the frame in the evaluated dataset.
    pub index: usize,
    pub episode: u64,
    pub t: u64,
    pub decision: bool,
    pub score: f64,
    pub label: bool,
    pub class: Class,
    pub attribution: Option<Attribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub frames: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub attributed: usize,
    pub weighted_error: f64,
}

impl ErrorSummary {
    pub fn count(&self, c: Class) -> usize {
        match c {
            Class::TP => self.tp,
            Class::FP => self.fp,
            Class::FN => self.fn_,
            Class::TN => self.tn,
        }
    }

    pub fn errors(&self) -> usize {
        self.fp + self.fn_
    }

    /// Events of class `c` per thousand frames.
    pub fn rate_per_1000(&self, c: Class) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            1000.0 * self.count(c) as f64 / self.frames as f64
        }
    }
}

/// Decisions for a whole dataset, in dataset order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionLog {
    pub entries: Vec<LogEntry>,
}

impl DecisionLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LogEntry> {
        self.entries.iter()
    }

    pub fn summary(&self, w: &ClassWeights) -> ErrorSummary {
        let mut s = ErrorSummary {
            frames: self.entries.len(),
            ..Default::default()
        };
        for e in &self.entries {
            match e.class {
                Class::TP => s.tp += 1,
                Class::FP => s.fp += 1,
                Class::FN => s.fn_ += 1,
                Class::TN => s.tn += 1,
            }
            s.attributed += e.attribution.is_some() as usize;
        }
        s.weighted_error = w.weighted_error(s.fp, s.fn_);
        s
    }

    /// Export as CSV: frame-id, decision, label, class, suspect-param, alternate, margin.
    pub fn write_csv(&self, net: &NetworkSpec, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "frame-id",
            "decision",
            "label",
            "class",
            "suspect-param",
            "alternate",
            "margin",
        ])?;
        for e in &self.entries {
            let (param, alt, margin) = match &e.attribution {
                Some(a) => (
                    net.param_name(a.param).to_string(),
                    a.alternate.to_string(),
                    a.margin.to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            out.write_record([
                format!("{}:{}", e.episode, e.t),
                e.decision.to_string(),
                e.label.to_string(),
                e.class.as_str().to_string(),
                param,
                alt,
                margin,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_mapping() {
        assert_eq!(classify(true, true), Class::TP);
        assert_eq!(classify(true, false), Class::FP);
        assert_eq!(classify(false, true), Class::FN);
        assert_eq!(classify(false, false), Class::TN);
    }
}
