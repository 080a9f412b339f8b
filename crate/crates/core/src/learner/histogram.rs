use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Class, DecisionLog, NetworkSpec};
use crate::param::{Grid, ParamId, ParamSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccumulateError {
    #[error("log entry {index} blames unknown parameter #{param}")]
    UnknownParam { index: usize, param: u32 },
}

/// Class counts per alternate-value bin for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamHistogram {
    pub param: ParamId,
    pub spec: ParamSpec,
    pub bins_per_side: u32,
    /// Counts indexed `[class][slot]`, classes in `Class::ALL` order.
    counts: [Vec<u32>; 4],
}

fn class_slot(c: Class) -> usize {
    match c {
        Class::TP => 0,
        Class::FP => 1,
        Class::FN => 2,
        Class::TN => 3,
    }
}

impl ParamHistogram {
    pub fn new(param: ParamId, spec: ParamSpec, bins_per_side: u32) -> Self {
        let len = Grid::new(&spec, bins_per_side).len();
        ParamHistogram {
            param,
            spec,
            bins_per_side,
            counts: std::array::from_fn(|_| vec![0; len]),
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(&self.spec, self.bins_per_side)
    }

    pub fn count(&self, c: Class, offset: i32) -> u32 {
        let g = self.grid();
        if !g.contains(offset) {
            return 0;
        }
        self.counts[class_slot(c)][g.slot(offset)]
    }

    /// Record one event; returns false if the alternate falls outside the grid.
    pub fn add(&mut self, c: Class, alternate: f64) -> bool {
        let g = self.grid();
        match g.offset_of(alternate) {
            Some(k) if k != 0 => {
                self.counts[class_slot(c)][g.slot(k)] += 1;
                true
            }
            _ => false,
        }
    }

    pub fn add_at(&mut self, c: Class, offset: i32, n: u32) {
        let g = self.grid();
        assert!(g.contains(offset) && offset != 0, "offset {offset} outside grid");
        self.counts[class_slot(c)][g.slot(offset)] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }

    pub fn merge(&mut self, other: &ParamHistogram) {
        assert_eq!(self.counts[0].len(), other.counts[0].len(), "histogram grids differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// One histogram per network parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamHistograms {
    pub entries: Vec<ParamHistogram>,
}

impl ParamHistograms {
    pub fn empty(net: &NetworkSpec) -> Self {
        ParamHistograms {
            entries: net
                .param_ids()
                .map(|id| ParamHistogram::new(id, net.param(id).clone(), net.bins_per_side()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &ParamHistogram {
        &self.entries[id.index()]
    }

    pub fn merge(&mut self, other: &ParamHistograms) {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.merge(b);
        }
    }
}

/// Histogram every attributed decision by its suspect's alternate value.
/// Unattributed decisions and alternates off the grid are dropped.
pub fn accumulate(log: &DecisionLog, net: &NetworkSpec) -> Result<ParamHistograms, AccumulateError> {
    let mut h = ParamHistograms::empty(net);
    for e in log.iter() {
        let Some(a) = &e.attribution else { continue };
        let slot = h
            .entries
            .get_mut(a.param.index())
            .ok_or(AccumulateError::UnknownParam {
                index: e.index,
                param: a.param.0,
            })?;
        slot.add(e.class, a.alternate);
    }
    Ok(h)
}
