//! Cardiac analysis kernels: long-axis landmarks, short-axis volumetry and
//! perfusion sectors, plus the analysis gadgets and report document.

mod gadgets;
pub mod geometry;
pub mod lax;
mod mask;
pub mod perf;
pub mod render;
pub mod report;
pub mod sax;

pub use gadgets::{
    register, LaxAnalysisGadget, PerfAnalysisGadget, SaxAnalysisGadget, FLAG_NO_PARTNER_SCAN, FLAG_NO_SEGMENT_17, PERF_AIF,
    PERF_FLOW, PERF_SERIES_META, SLICE_CLASS_META,
};
pub use mask::{labels, rle_decode, rle_encode, SegmentationMask};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("landmark {0:?} missing")]
    MissingLandmark(String),
    #[error("landmark {name:?} at ({row}, {col}) lies outside the image")]
    LandmarkOutOfBounds { name: String, row: f64, col: f64 },
    #[error("need at least {need} phases, got {got}")]
    TooFewPhases { need: usize, got: usize },
    #[error("landmark sets mix views")]
    MixedViews,
    #[error("all LV lengths are zero")]
    ZeroLength,
    #[error("{0} is not unit length")]
    NonUnitDirection(&'static str),
    #[error("valve points are collinear or coincident")]
    Collinear,
    #[error("need at least 3 valve points, got {0}")]
    TooFewPoints(usize),
    #[error("apex lies on the valve plane")]
    ApexOnPlane,
    #[error("end-diastolic volume is zero")]
    ZeroEdv,
    #[error("no myocardium in mask")]
    NoMyocardium,
    #[error("no LV blood pool in mask")]
    NoBloodPool,
    #[error("RV not adjacent to the myocardium")]
    RvNotAdjacent,
    #[error("myocardium has no {0} boundary")]
    MissingBoundary(&'static str),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("{0} curve is flat after baseline removal")]
    FlatCurve(&'static str),
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("label {0} is not a valid mask code")]
    BadLabel(u16),
    #[error("{0}")]
    Other(String),
}
