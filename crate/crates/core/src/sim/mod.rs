//! Scanner simulator: phantom sessions, a paced streaming client and
//! verification of server results against the phantom's ground truth.

mod client;
pub mod phantom;
mod session;
mod truth;
pub mod verify;

pub use client::{run_client, RunRecord, TimingLog, RESULT_TIMEOUT};
pub use phantom::{Pacing, PhantomParams};
pub use session::{generate_session, Planned, ScanKind, Session, Slot};
pub use truth::{GroundTruth, LaxTruth, PerfTruth, SaxTruth, ViewTruth};
pub use verify::{verify_run, Check, RunInfo, Tolerances, Verdict};

use thiserror::Error;

use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid phantom parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("run artifacts: {0}")]
    Artifact(String),
}
