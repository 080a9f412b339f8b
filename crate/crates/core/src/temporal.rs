//! Sliding-window smoother (AND over time) and retriggerable monostable (OR over
//! time), each with an integer time constant that can itself be blamed.

use std::collections::VecDeque;

use crate::score::{and_over, or_over, Attribution, ParamRef, Score};

/// An integer time constant plus how far past it the alternate scan looks.
#[derive(Debug, Clone, Copy)]
pub struct TimeConst<'a> {
    pub param: ParamRef<'a>,
    pub scan_margin: u32,
}

impl<'a> TimeConst<'a> {
    pub fn new(param: ParamRef<'a>, scan_margin: Option<u32>) -> Self {
        let scan_margin = scan_margin.unwrap_or_else(|| default_scan_margin(param.spec.tol_pos));
        TimeConst {
            param,
            scan_margin: scan_margin.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.param.value().max(1.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn candidate(&self, alt: usize) -> Option<Attribution> {
        if alt < 1 {
            return None;
        }
        self.param.move_candidate(alt as f64)
    }
}

pub fn default_scan_margin(tol_pos: f64) -> u32 {
    (tol_pos.ceil() as u32).max(4)
}

/// History of one temporal unit within an episode, most recent sample first.
#[derive(Debug, Clone)]
pub struct WindowState {
    buf: VecDeque<Score>,
    capacity: usize,
    rotation: u64,
}

impl WindowState {
    /// State able to serve a time constant of `value` plus `scan_margin` lags.
    pub fn new(value: usize, scan_margin: u32) -> Self {
        let capacity = value.max(1) + scan_margin as usize + 1;
        WindowState {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            rotation: 0,
        }
    }

    pub fn for_time_const(tc: &TimeConst<'_>) -> Self {
        Self::new(tc.len(), tc.scan_margin)
    }

    pub fn rotation(&self) -> u64 {
        self.rotation
    }

    pub fn set_rotation(&mut self, r: u64) {
        self.rotation = r;
    }

    fn push(&mut self, s: Score) {
        if self.buf.len() == self.capacity {
            self.buf.pop_back();
        }
        self.buf.push_front(s);
    }

    /// Sample at `lag` frames ago; frames before the episode start read as saturated false.
    pub fn at(&self, lag: usize) -> Score {
        debug_assert!(lag < self.capacity);
        self.buf.get(lag).copied().unwrap_or(Score::FALSE)
    }

    fn window(&self, len: usize) -> impl Iterator<Item = Score> + '_ {
        (0..len).map(move |lag| self.at(lag))
    }
}

fn pick(chain: Option<Attribution>, structural: Option<Attribution>) -> Option<Attribution> {
    match (chain, structural) {
        (Some(c), Some(t)) => Some(if t.margin < c.margin { t } else { c }),
        (c, t) => c.or(t),
    }
}

/// Push `input` and report whether it has held for the last `V` frames.
pub fn smooth_and(state: &mut WindowState, input: Score, v: &TimeConst<'_>) -> Score {
    state.push(input);
    let len = v.len();
    let out = and_over(state.window(len)).expect("window is never empty");
    let structural = if out.decision() {
        let scan_end = (len + v.scan_margin as usize).min(state.capacity);
        (len..scan_end)
            .find(|&lag| !state.at(lag).decision())
            .and_then(|f| v.candidate(f + 1))
    } else {
        let run = (0..len).take_while(|&lag| state.at(lag).decision()).count();
        v.candidate(run)
    };
    Score {
        s: out.s,
        attribution: pick(out.attribution, structural),
    }
}

/// Push `input` and report whether any of the last `M` frames triggered.
///
/// With several triggers in the hold window, blame rotates between them from
/// call to call; the alternate is widened so that it defeats every trigger in
/// the window, and the candidate is dropped if the triggers disagree on the
/// parameter to blame.
pub fn monostable(state: &mut WindowState, input: Score, m: &TimeConst<'_>) -> Score {
    state.push(input);
    let len = m.len();
    let out = or_over(state.window(len)).expect("window is never empty");

    let (chain, structural) = if out.decision() {
        let triggers: Vec<usize> = (0..len).filter(|&lag| state.at(lag).decision()).collect();
        let chain = if triggers.len() == 1 {
            out.attribution
        } else {
            let anchor = triggers[(state.rotation % triggers.len() as u64) as usize];
            state.rotation += 1;
            widen(state, &triggers, anchor)
        };
        let structural = match triggers[0] {
            0 => None,
            k => m.candidate(k),
        };
        (chain, structural)
    } else {
        let scan_end = (len + m.scan_margin as usize).min(state.capacity);
        let structural = (len..scan_end)
            .find(|&lag| state.at(lag).decision())
            .and_then(|k| m.candidate(k + 1));
        (out.attribution, structural)
    };
    Score {
        s: out.s,
        attribution: pick(chain, structural),
    }
}

fn widen(state: &WindowState, triggers: &[usize], anchor: usize) -> Option<Attribution> {
    let base = state.at(anchor).attribution?;
    let side = (base.alternate - base.from).signum();
    let mut widest = base;
    for &lag in triggers {
        let a = state.at(lag).attribution?;
        if a.param != base.param || (a.alternate - a.from).signum() != side {
            return None;
        }
        if (a.alternate - a.from).abs() > (widest.alternate - widest.from).abs() {
            widest = a;
        }
    }
    Some(Attribution {
        alternate: widest.alternate,
        ..base
    })
}
