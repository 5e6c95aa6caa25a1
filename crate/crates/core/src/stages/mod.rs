//! Generic streaming stages: k-space triggering, reference-data separation
//! and image-group buffering.
//!
//! All groupers here assume non-decreasing group keys. A key that goes
//! backwards is a stream error, never a silent re-open.

mod gadgets;
mod group;
mod trigger;

pub use gadgets::{register, FftReconGadget, ImageBufferGadget, KSpaceBufferGadget, PrepareRefGadget, TriggerGadget};
pub use group::{GroupBy, ImageGroup, ImageGrouper, GROUND_TRUTH_ROLE};
pub use trigger::{prepare_ref, BucketExtents, KSpaceBucket, Trigger, TriggerDimension};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageError {
    #[error("{dimension} key went backwards from {previous} to {got}")]
    DecreasingKey { dimension: &'static str, previous: u32, got: u32 },
    #[error("unknown {property} value {value:?}")]
    BadProperty { property: &'static str, value: String },
    #[error("readout shape changed mid-scan: {0}")]
    ShapeChanged(String),
}
