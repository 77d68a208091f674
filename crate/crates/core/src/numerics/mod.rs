//! Dense-tensor compute with reverse-mode gradients, AdamW, and the warmup
//! learning-rate schedule.

mod adamw;
pub mod gradcheck;
mod graph;
mod param;
mod schedule;
mod tensor;

pub use adamw::{adamw_step, AdamWState};
pub use graph::{Graph, NodeId};
pub use param::{ParamId, ParamSet, Parameter};
pub use schedule::WarmupSchedule;
pub use tensor::{Float, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: bad argument: {reason}")]
    BadArgument { op: &'static str, reason: String },
    #[error("shape {shape:?} does not hold {len} elements")]
    ShapeLenMismatch { shape: Vec<usize>, len: usize },
    #[error("node {0} is not part of this graph")]
    UnknownNode(usize),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("cross_entropy: no non-ignored target positions")]
    NoTargets,
}
