//! Frame-by-frame evaluation of a network over episodes.

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregate::{count_at_least, fraction_below, region_count, AggregateError, RegionSpec};
use crate::network::dataset::{Feature, Frame};
use crate::network::log::{classify, DecisionLog, LogEntry};
use crate::network::spec::{NetworkSpec, Op, Scope};
use crate::score::{
    and_over, eval_threshold_above, eval_threshold_below, or_over, Score, ScoreError,
};
use crate::temporal::{monostable, smooth_and, TimeConst, WindowState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("frame {frame}: unit {unit}: missing feature `{feature}`")]
    MissingFeature {
        frame: String,
        unit: String,
        feature: String,
    },
    #[error("frame {frame}: unit {unit}: feature `{feature}` must be {expected}")]
    FeatureType {
        frame: String,
        unit: String,
        feature: String,
        expected: &'static str,
    },
    #[error("frame {frame}: unit {unit}: missing mask `{mask}`")]
    MissingMask {
        frame: String,
        unit: String,
        mask: String,
    },
    #[error("frame {frame}: unit {unit}: {source}")]
    Score {
        frame: String,
        unit: String,
        #[source]
        source: ScoreError,
    },
    #[error("frame {frame}: unit {unit}: {source}")]
    Aggregate {
        frame: String,
        unit: String,
        #[source]
        source: AggregateError,
    },
    #[error("episode {episode}: frame t={t} does not follow t={prev}")]
    NonContiguous { episode: u64, prev: u64, t: u64 },
    #[error("episode {0} is split across non-adjacent parts of the dataset")]
    EpisodeSplit(u64),
}

/// Temporal state for one episode plus scratch space reused across frames.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    episode: Option<u64>,
    last_t: Option<u64>,
    windows: Vec<WindowState>,
    object_scores: Vec<Score>,
    frame_scores: Vec<Score>,
    gathered: Vec<Score>,
}

impl EpisodeState {
    pub fn new(net: &NetworkSpec) -> Self {
        let mut st = EpisodeState {
            episode: None,
            last_t: None,
            windows: Vec::new(),
            object_scores: Vec::new(),
            frame_scores: vec![Score::FALSE; net.units.len()],
            gathered: Vec::new(),
        };
        st.reset(net);
        st
    }

    fn reset(&mut self, net: &NetworkSpec) {
        self.windows.clear();
        for u in &net.units {
            if let Op::Smooth {
                param, scan_margin, ..
            }
            | Op::Mono {
                param, scan_margin, ..
            } = &u.op
            {
                let tc = TimeConst::new(net.param_ref(*param), *scan_margin);
                self.windows.push(WindowState::for_time_const(&tc));
            }
        }
        self.last_t = None;
        self.episode = None;
    }

    pub fn episode(&self) -> Option<u64> {
        self.episode
    }
}

/// Evaluate one frame, advancing the episode's temporal state. A frame from a
/// different episode than the state's resets it first.
pub fn eval_frame(
    net: &NetworkSpec,
    frame: &Frame,
    state: &mut EpisodeState,
) -> Result<LogEntry, EvalError> {
    eval_frame_at(net, frame, 0, state)
}

pub(crate) fn eval_frame_at(
    net: &NetworkSpec,
    frame: &Frame,
    index: usize,
    state: &mut EpisodeState,
) -> Result<LogEntry, EvalError> {
    if state.episode != Some(frame.episode) {
        state.reset(net);
        state.episode = Some(frame.episode);
    } else if let Some(prev) = state.last_t {
        if frame.t != prev + 1 {
            return Err(EvalError::NonContiguous {
                episode: frame.episode,
                prev,
                t: frame.t,
            });
        }
    }

    let n_units = net.units.len();
    let n_obj = frame.objects.len();
    state.object_scores.clear();
    state.object_scores.resize(n_units * n_obj, Score::FALSE);
    state.frame_scores.resize(n_units, Score::FALSE);

    let fid = || frame.id();
    let unit_id = |u: usize| net.units[u].id.clone();
    let score_err = |u: usize| {
        move |source: ScoreError| EvalError::Score {
            frame: frame.id(),
            unit: net.units[u].id.clone(),
            source,
        }
    };

    for (o, obj) in frame.objects.iter().enumerate() {
        let base = o * n_units;
        for &u in &net.object_order {
            let unit = &net.units[u];
            let sc = match &unit.op {
                Op::Above { feature, param } | Op::Below { feature, param } => {
                    let x = match obj.features.get(feature).or_else(|| net.doc().defaults.get(feature)) {
                        Some(&x) => x,
                        None => {
                            return Err(EvalError::MissingFeature {
                                frame: fid(),
                                unit: unit_id(u),
                                feature: feature.clone(),
                            })
                        }
                    };
                    let p = net.param_ref(*param);
                    if matches!(unit.op, Op::Above { .. }) {
                        eval_threshold_above(x, p)
                    } else {
                        eval_threshold_below(x, p)
                    }
                    .map_err(score_err(u))?
                }
                Op::And { inputs } => {
                    and_over(inputs.iter().map(|&i| state.object_scores[base + i])).expect("validated non-empty")
                }
                Op::Or { inputs } => {
                    or_over(inputs.iter().map(|&i| state.object_scores[base + i])).expect("validated non-empty")
                }
                _ => unreachable!("validated object-level unit"),
            };
            state.object_scores[base + u] = sc;
        }
    }

    for &u in &net.frame_order {
        let unit = &net.units[u];
        debug_assert_eq!(unit.scope, Scope::Frame);
        let sc = match &unit.op {
            Op::Above { feature, param } | Op::Below { feature, param } => {
                let x = match frame.features.get(feature) {
                    Some(Feature::Scalar(x)) => *x,
                    Some(Feature::Samples(_)) => {
                        return Err(EvalError::FeatureType {
                            frame: fid(),
                            unit: unit_id(u),
                            feature: feature.clone(),
                            expected: "a scalar",
                        })
                    }
                    None => match net.doc().defaults.get(feature) {
                        Some(&x) => x,
                        None => {
                            return Err(EvalError::MissingFeature {
                                frame: fid(),
                                unit: unit_id(u),
                                feature: feature.clone(),
                            })
                        }
                    },
                };
                let p = net.param_ref(*param);
                if matches!(unit.op, Op::Above { .. }) {
                    eval_threshold_above(x, p)
                } else {
                    eval_threshold_below(x, p)
                }
                .map_err(score_err(u))?
            }
            Op::And { inputs } => {
                and_over(inputs.iter().map(|&i| state.frame_scores[i])).expect("validated non-empty")
            }
            Op::Or { inputs } => {
                or_over(inputs.iter().map(|&i| state.frame_scores[i])).expect("validated non-empty")
            }
            Op::Smooth {
                input,
                param,
                scan_margin,
            } => {
                let tc = TimeConst::new(net.param_ref(*param), *scan_margin);
                let slot = net.temporal_slots[u].expect("temporal unit has a slot");
                let inp = state.frame_scores[*input];
                smooth_and(&mut state.windows[slot], inp, &tc)
            }
            Op::Mono {
                input,
                param,
                scan_margin,
            } => {
                let tc = TimeConst::new(net.param_ref(*param), *scan_margin);
                let slot = net.temporal_slots[u].expect("temporal unit has a slot");
                let inp = state.frame_scores[*input];
                monostable(&mut state.windows[slot], inp, &tc)
            }
            Op::Count { input, param } => {
                state.gathered.clear();
                state
                    .gathered
                    .extend((0..n_obj).map(|o| state.object_scores[o * n_units + input]));
                count_at_least(&state.gathered, net.param_ref(*param))
            }
            Op::Fraction {
                feature,
                cut,
                param,
            } => {
                let samples = match frame.features.get(feature) {
                    Some(Feature::Samples(s)) => s.as_slice(),
                    Some(Feature::Scalar(_)) => {
                        return Err(EvalError::FeatureType {
                            frame: fid(),
                            unit: unit_id(u),
                            feature: feature.clone(),
                            expected: "a list of samples",
                        })
                    }
                    None => {
                        return Err(EvalError::MissingFeature {
                            frame: fid(),
                            unit: unit_id(u),
                            feature: feature.clone(),
                        })
                    }
                };
                fraction_below(samples, *cut, net.param_ref(*param)).map_err(|source| {
                    EvalError::Aggregate {
                        frame: fid(),
                        unit: unit_id(u),
                        source,
                    }
                })?
            }
            Op::Region {
                mask,
                bounds,
                param,
            } => {
                let grid = frame.masks.get(mask).ok_or_else(|| EvalError::MissingMask {
                    frame: fid(),
                    unit: unit_id(u),
                    mask: mask.clone(),
                })?;
                let r = RegionSpec {
                    x0: net.param_ref(bounds[0]),
                    x1: net.param_ref(bounds[1]),
                    y0: net.param_ref(bounds[2]),
                    y1: net.param_ref(bounds[3]),
                    threshold: net.param_ref(*param),
                };
                region_count(grid, &r).map_err(|source| EvalError::Aggregate {
                    frame: fid(),
                    unit: unit_id(u),
                    source,
                })?
            }
        };
        state.frame_scores[u] = sc;
    }
    state.last_t = Some(frame.t);

    let out = state.frame_scores[net.output];
    let decision = out.decision();
    Ok(LogEntry {
        index,
        episode: frame.episode,
        t: frame.t,
        decision,
        score: out.s,
        label: frame.label,
        class: classify(decision, frame.label),
        attribution: out.attribution,
    })
}

/// Contiguous runs of frames sharing an episode id, as index ranges.
pub fn episode_runs(frames: &[Frame]) -> Result<Vec<std::ops::Range<usize>>, EvalError> {
    let mut runs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || frames[i].episode != frames[start].episode {
            if !seen.insert(frames[start].episode) {
                return Err(EvalError::EpisodeSplit(frames[start].episode));
            }
            runs.push(start..i);
            start = i;
        }
    }
    if frames.is_empty() {
        runs.clear();
    }
    Ok(runs)
}

/// Evaluate a single episode's frames from a fresh state. `index_base` is the
/// dataset position of the first frame.
pub fn eval_episode(
    net: &NetworkSpec,
    frames: &[Frame],
    index_base: usize,
) -> Result<Vec<LogEntry>, EvalError> {
    let mut state = EpisodeState::new(net);
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| eval_frame_at(net, f, index_base + i, &mut state))
        .collect()
}

/// Evaluate every episode (in parallel) and concatenate the logs in dataset order.
pub fn eval_dataset(net: &NetworkSpec, frames: &[Frame]) -> Result<DecisionLog, EvalError> {
    let runs = episode_runs(frames)?;
    let parts: Vec<Vec<LogEntry>> = runs
        .par_iter()
        .map(|r| eval_episode(net, &frames[r.clone()], r.start))
        .collect::<Result<_, _>>()?;
    Ok(DecisionLog {
        entries: parts.into_iter().flatten().collect(),
    })
}
