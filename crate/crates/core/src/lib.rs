//! Rule-network decision engine with per-decision credit assignment and a
//! histogram-based parameter tuner.

pub mod aggregate;
pub mod learner;
pub mod network;
pub mod param;
pub mod score;
pub mod temporal;

pub use learner::{tune, ClassWeights, LearnerConfig, TuneResult};
pub use network::{
    eval_dataset, parse_network, sample_network, Class, DecisionLog, ErrorSummary, Frame, NetworkSpec,
};
pub use param::{ParamId, ParamKind, ParamSpec};
pub use score::{Attribution, Score};
