//! Model side of the image-analysis stage: an out-of-process worker reached
//! over the framed tensor protocol, plus group/tensor conversion.

mod convert;
mod gadget;
pub mod protocol;
pub mod stub;
mod tensor;
mod worker;

pub use convert::{artifacts_from_tensors, group_to_tensors, masks_to_tensor, InferredGroup, LANDMARK_META, GT_LANDMARK_META, GT_MASK_META};
pub use gadget::{InferenceGadget, MASK_ROLE};
pub use protocol::{Device, WorkerMessage};
pub use tensor::{DType, Tensor};
pub use worker::{default_worker_cmd, ModelHandle, ModelSpec, WorkerClient, WorkerTarget, SHUTDOWN_GRACE};

use thiserror::Error;

use crate::chain::GadgetRegistry;
use crate::wire::frame::Truncated;
use crate::wire::WireError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
    #[error("worker protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("worker i/o: {0}")]
    Io(String),
    #[error("launching worker {command:?}: {reason}")]
    Launch { command: String, reason: String },
    #[error("worker rejected model: {0}")]
    LoadRejected(String),
    #[error("{what} timed out after {ms} ms")]
    Timeout { what: &'static str, ms: u64 },
    #[error("worker exited: {0}")]
    WorkerExited(String),
    #[error("worker reported: {0}")]
    Worker(String),
    #[error("model handle is not valid for this worker")]
    InvalidHandle,
    #[error("model already loaded on this worker")]
    AlreadyLoaded,
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error("unknown output tensor {0:?}")]
    UnknownOutput(String),
    #[error("group shape: {0}")]
    Shape(String),
}

impl From<Truncated> for BridgeError {
    fn from(t: Truncated) -> Self {
        BridgeError::Wire(t.into())
    }
}

pub fn register(r: &mut GadgetRegistry) {
    r.register("inference", InferenceGadget::default);
}
