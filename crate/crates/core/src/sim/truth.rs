use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cmr::lax::View;

use super::session::ScanKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaxTruth {
    pub edv_ml: f64,
    pub esv_ml: f64,
    pub ef_percent: f64,
    pub mass_g: f64,
    pub ed_phase: usize,
    pub es_phase: usize,
    pub recon_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTruth {
    pub view: View,
    pub gls_percent: f64,
    pub mapse_mm: f64,
    pub tapse_mm: Option<f64>,
    pub lengths_mm: Vec<f64>,
    /// Per phase, landmark pixel coordinates `(row, col)`.
    pub landmarks: Vec<BTreeMap<String, (f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaxTruth {
    pub views: Vec<ViewTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfTruth {
    /// Sector flows of this scan.
    pub flows: Vec<f64>,
    pub partner_flows: Vec<f64>,
    /// Stress over rest, per sector.
    pub mpr: Vec<f64>,
    pub ptt_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: ScanKind,
    pub sax: Option<SaxTruth>,
    pub lax: Option<LaxTruth>,
    pub perf: Option<PerfTruth>,
}

impl Default for GroundTruth {
    fn default() -> Self {
        Self { kind: ScanKind::Sax, sax: None, lax: None, perf: None }
    }
}
