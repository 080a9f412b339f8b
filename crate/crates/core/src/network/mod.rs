//! Declarative networks, datasets, evaluation, and synthetic scenarios.

mod dataset;
mod eval;
mod log;
mod spec;
pub mod synth;

pub use dataset::{read_jsonl, write_jsonl, DatasetError, Feature, Frame, Object};
pub use eval::{episode_runs, eval_dataset, eval_episode, eval_frame, EpisodeState, EvalError};
pub use log::{classify, Class, DecisionLog, ErrorSummary, LogEntry};
pub use spec::{parse_network, NetworkDoc, NetworkError, NetworkSpec, OutputDoc, Scope, UnitDoc, UnitKind};

/// Reference far-taillight detector: per-spot feature tests ANDed, counted, and
/// combined with scene tests, then smoothed and held.
pub const SAMPLE_NETWORK: &str = include_str!("../../../../samples/taillight.json");

pub fn sample_network() -> NetworkSpec {
    parse_network(SAMPLE_NETWORK).expect("bundled sample network is valid")
}
