//! Long-axis landmark analysis: LV length, GL-shortening, MAPSE and TAPSE.
//!
//! MAPSE is the ED→ES displacement of the mitral midpoint projected on the ED
//! long axis (mitral midpoint toward apex), positive for apical motion. TAPSE
//! uses the lateral tricuspid point in the same way.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::wire::ImageHeader;

use super::geometry::{to_patient_coords, Point3};
use super::AnalysisError;

/// Frame meta key naming the long-axis view.
pub const VIEW_META: &str = "view";

pub const MV1: &str = "mv1";
pub const MV2: &str = "mv2";
pub const APEX: &str = "apex";
pub const TV_LAT: &str = "tv_lat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "CH2")]
    Ch2,
    #[serde(rename = "CH4")]
    Ch4,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Ch2 => "CH2",
            View::Ch4 => "CH4",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CH2" | "2CH" => Ok(View::Ch2),
            "CH4" | "4CH" => Ok(View::Ch4),
            _ => Err(AnalysisError::Other(format!("unknown view {s:?}"))),
        }
    }
}

/// Named landmark pixel coordinates `(row, col)` for one phase of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub view: View,
    pub phase_idx: u16,
    pub trigger_time_ms: f64,
    pub points: BTreeMap<String, (f64, f64)>,
}

impl LandmarkSet {
    pub fn point(&self, name: &str) -> Result<(f64, f64), AnalysisError> {
        self.points.get(name).copied().ok_or_else(|| AnalysisError::MissingLandmark(name.into()))
    }

    pub fn patient(&self, name: &str, h: &ImageHeader) -> Result<Point3, AnalysisError> {
        to_patient_coords(self.point(name)?, h)
    }

    /// Required points present and every point within the image.
    pub fn validate(&self, h: &ImageHeader) -> Result<(), AnalysisError> {
        for name in [MV1, MV2, APEX] {
            self.point(name)?;
        }
        for (name, &(row, col)) in &self.points {
            let inside = (0.0..=(h.rows as f64 - 1.0)).contains(&row) && (0.0..=(h.cols as f64 - 1.0)).contains(&col);
            if !inside {
                return Err(AnalysisError::LandmarkOutOfBounds { name: name.clone(), row, col });
            }
        }
        Ok(())
    }

    pub fn mitral_midpoint(&self, h: &ImageHeader) -> Result<Point3, AnalysisError> {
        Ok((self.patient(MV1, h)? + self.patient(MV2, h)?) / 2.0)
    }
}

/// Distance from the mitral midpoint to the apex, in mm.
pub fn lv_length(ls: &LandmarkSet, h: &ImageHeader) -> Result<f64, AnalysisError> {
    Ok((ls.mitral_midpoint(h)? - ls.patient(APEX, h)?).norm())
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

pub(crate) fn argmin(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, x)| if *x < v[best] { i } else { best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub view: View,
    /// Phase index of each curve entry, ordered by trigger time.
    pub phases: Vec<u16>,
    pub trigger_times_ms: Vec<f64>,
    pub lengths_mm: Vec<f64>,
    /// Per-phase shortening relative to ED, in percent.
    pub gls_curve: Vec<f64>,
    pub gls_percent: f64,
    pub mapse_mm: f64,
    pub tapse_mm: Option<f64>,
    /// Indices into the curve.
    pub ed_phase: usize,
    pub es_phase: usize,
}

/// Valve and apex positions in patient space, kept for the short-axis chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub view: View,
    /// Per curve entry: `[mv1, mv2]`.
    pub mitral: Vec<[[f64; 3]; 2]>,
    pub apex: Vec<[f64; 3]>,
    pub ed_phase: usize,
    pub es_phase: usize,
}

fn sorted(sets: &[LandmarkSet]) -> Result<Vec<&LandmarkSet>, AnalysisError> {
    if sets.len() < 2 {
        return Err(AnalysisError::TooFewPhases { need: 2, got: sets.len() });
    }
    if sets.iter().any(|s| s.view != sets[0].view) {
        return Err(AnalysisError::MixedViews);
    }
    let mut v: Vec<&LandmarkSet> = sets.iter().collect();
    v.sort_by(|a, b| a.trigger_time_ms.total_cmp(&b.trigger_time_ms));
    Ok(v)
}

fn excursion(point_ed: Point3, point_es: Point3, apex_ed: Point3) -> f64 {
    let axis = apex_ed - point_ed;
    let n = axis.norm();
    if n == 0.0 {
        return 0.0;
    }
    (point_es - point_ed).dot(&(axis / n))
}

/// Length curve and shortening biomarkers of one view.
pub fn lax_biomarkers(sets: &[LandmarkSet], h: &ImageHeader) -> Result<ViewReport, AnalysisError> {
    let sets = sorted(sets)?;
    let lengths = sets.iter().map(|s| lv_length(s, h)).collect::<Result<Vec<_>, _>>()?;
    let ed = argmax(&lengths);
    let es = argmin(&lengths);
    let l_ed = lengths[ed];
    if l_ed == 0.0 {
        return Err(AnalysisError::ZeroLength);
    }
    let gls_curve: Vec<f64> = lengths.iter().map(|l| 100.0 * (l_ed - l) / l_ed).collect();
    let apex_ed = sets[ed].patient(APEX, h)?;
    let mapse = excursion(sets[ed].mitral_midpoint(h)?, sets[es].mitral_midpoint(h)?, apex_ed);
    let tapse = match (sets[0].view, sets[ed].points.get(TV_LAT), sets[es].points.get(TV_LAT)) {
        (View::Ch4, Some(_), Some(_)) => Some(excursion(sets[ed].patient(TV_LAT, h)?, sets[es].patient(TV_LAT, h)?, apex_ed)),
        _ => None,
    };
    Ok(ViewReport {
        view: sets[0].view,
        phases: sets.iter().map(|s| s.phase_idx).collect(),
        trigger_times_ms: sets.iter().map(|s| s.trigger_time_ms).collect(),
        gls_percent: gls_curve[es],
        gls_curve,
        lengths_mm: lengths,
        mapse_mm: mapse,
        tapse_mm: tapse,
        ed_phase: ed,
        es_phase: es,
    })
}

/// Patient-space valve and apex trajectories of one view.
pub fn view_geometry(sets: &[LandmarkSet], h: &ImageHeader, report: &ViewReport) -> Result<ViewGeometry, AnalysisError> {
    let sets = sorted(sets)?;
    let arr = |p: Point3| [p.x, p.y, p.z];
    let mut mitral = Vec::with_capacity(sets.len());
    let mut apex = Vec::with_capacity(sets.len());
    for s in sets {
        mitral.push([arr(s.patient(MV1, h)?), arr(s.patient(MV2, h)?)]);
        apex.push(arr(s.patient(APEX, h)?));
    }
    Ok(ViewGeometry { view: report.view, mitral, apex, ed_phase: report.ed_phase, es_phase: report.es_phase })
}

/// Long-axis phase matching a short-axis phase of a cine with `n_sax` phases.
pub fn lax_phase_for(sax_phase: usize, n_sax: usize, n_lax: usize) -> usize {
    if n_sax == 0 || n_lax == 0 {
        return 0;
    }
    ((sax_phase as f64 * n_lax as f64 / n_sax as f64).round() as usize) % n_lax
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::frame;
    use nalgebra::{Rotation3, Unit, Vector3};
    use proptest::prelude::*;

    fn header() -> ImageHeader {
        let mut h = frame(0, 0, 0).header;
        h.rows = 256;
        h.cols = 256;
        h
    }

    fn set(phase: u16, pts: &[(&str, (f64, f64))]) -> LandmarkSet {
        LandmarkSet {
            view: View::Ch4,
            phase_idx: phase,
            trigger_time_ms: phase as f64 * 40.0,
            points: pts.iter().map(|(n, p)| (n.to_string(), *p)).collect(),
        }
    }

    #[test]
    fn length_of_simple_set() {
        let s = set(0, &[(MV1, (0.0, 0.0)), (MV2, (0.0, 20.0)), (APEX, (40.0, 10.0))]);
        assert_eq!(lv_length(&s, &header()).unwrap(), 40.0);
        let s = set(0, &[(MV1, (0.0, 0.0)), (MV2, (0.0, 20.0)), (APEX, (0.0, 10.0))]);
        assert_eq!(lv_length(&s, &header()).unwrap(), 0.0);
        let s = set(0, &[(MV1, (0.0, 0.0)), (APEX, (0.0, 10.0))]);
        assert_eq!(lv_length(&s, &header()), Err(AnalysisError::MissingLandmark("mv2".into())));
    }

    fn with_length(phase: u16, l: f64) -> LandmarkSet {
        set(phase, &[(MV1, (100.0, 90.0)), (MV2, (100.0, 110.0)), (APEX, (100.0 + l, 100.0))])
    }

    #[test]
    fn gls_from_length_curve() {
        let sets: Vec<_> = [100.0, 92.0, 85.0, 90.0].iter().enumerate().map(|(i, l)| with_length(i as u16, *l)).collect();
        let r = lax_biomarkers(&sets, &header()).unwrap();
        assert_eq!((r.ed_phase, r.es_phase), (0, 2));
        assert_eq!(r.gls_percent, 15.0);
        assert_eq!(r.lengths_mm, [100.0, 92.0, 85.0, 90.0]);
    }

    #[test]
    fn curve_ordered_by_trigger_time() {
        let mut sets: Vec<_> = (0..4).map(|i| with_length(i, 100.0 - i as f64)).collect();
        sets.reverse();
        let r = lax_biomarkers(&sets, &header()).unwrap();
        assert_eq!(r.phases, [0, 1, 2, 3]);
        assert_eq!(r.gls_curve.len(), 4);
    }

    #[test]
    fn static_landmarks_give_zero() {
        let base = [(MV1, (100.0, 90.0)), (MV2, (100.0, 110.0)), (APEX, (180.0, 100.0)), (TV_LAT, (100.0, 60.0))];
        let sets: Vec<_> = (0..5).map(|p| set(p, &base)).collect();
        let r = lax_biomarkers(&sets, &header()).unwrap();
        assert_eq!((r.gls_percent, r.mapse_mm, r.tapse_mm), (0.0, 0.0, Some(0.0)));
        assert_eq!((r.ed_phase, r.es_phase), (0, 0));
    }

    #[test]
    fn mapse_projection() {
        // mitral midpoint moves 12 mm toward the apex along the ED axis
        let ed = set(0, &[(MV1, (100.0, 90.0)), (MV2, (100.0, 110.0)), (APEX, (180.0, 100.0))]);
        let es = set(1, &[(MV1, (112.0, 90.0)), (MV2, (112.0, 110.0)), (APEX, (180.0, 100.0))]);
        let r = lax_biomarkers(&[ed, es], &header()).unwrap();
        assert_eq!(r.mapse_mm, 12.0);
        assert_eq!(r.tapse_mm, None);
    }

    #[test]
    fn errors() {
        assert!(matches!(lax_biomarkers(&[with_length(0, 10.0)], &header()), Err(AnalysisError::TooFewPhases { .. })));
        let zero: Vec<_> = (0..3).map(|p| with_length(p, 0.0)).collect();
        assert_eq!(lax_biomarkers(&zero, &header()), Err(AnalysisError::ZeroLength));
        let mut mixed = vec![with_length(0, 10.0), with_length(1, 9.0)];
        mixed[1].view = View::Ch2;
        assert_eq!(lax_biomarkers(&mixed, &header()), Err(AnalysisError::MixedViews));
    }

    #[test]
    fn phase_mapping() {
        assert_eq!(lax_phase_for(10, 25, 25), 10);
        assert_eq!(lax_phase_for(10, 25, 30), 12);
        assert_eq!(lax_phase_for(24, 25, 20), 19);
        assert_eq!(lax_phase_for(3, 0, 20), 0);
    }

    /// Random landmark trajectory as 3D points on the image plane z = 0.
    fn trajectory() -> impl Strategy<Value = Vec<[(f64, f64); 4]>> {
        prop::collection::vec(prop::array::uniform4((20.0f64..200.0, 20.0f64..200.0)), 2..8)
    }

    fn sets_from(t: &[[(f64, f64); 4]]) -> Vec<LandmarkSet> {
        t.iter()
            .enumerate()
            .map(|(i, p)| set(i as u16, &[(MV1, p[0]), (MV2, p[1]), (APEX, p[2]), (TV_LAT, p[3])]))
            .collect()
    }

    proptest! {
        #[test]
        fn gls_matches_hand_formula(t in trajectory()) {
            let sets = sets_from(&t);
            let h = header();
            let Ok(r) = lax_biomarkers(&sets, &h) else { return Ok(()) };
            let lengths: Vec<f64> = t.iter().map(|p| {
                let m = ((p[0].0 + p[1].0) / 2.0, (p[0].1 + p[1].1) / 2.0);
                ((m.0 - p[2].0).powi(2) + (m.1 - p[2].1).powi(2)).sqrt()
            }).collect();
            let max = lengths.iter().cloned().fold(f64::MIN, f64::max);
            let min = lengths.iter().cloned().fold(f64::MAX, f64::min);
            let gls = 100.0 * (max - min) / max;
            prop_assert!((r.gls_percent - gls).abs() <= 1e-9 * gls.abs().max(1.0));
            prop_assert!(r.gls_percent >= 0.0 && r.gls_percent < 100.0);
        }

        // Rotating and translating the image plane, or scaling its pixel size,
        // moves all landmarks rigidly (or uniformly) in patient space.
        #[test]
        fn rigid_and_scale_invariance(
            t in trajectory(),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -3.1f64..3.1,
            shift in prop::array::uniform3(-100.0f64..100.0),
            scale in 0.3f64..3.0,
        ) {
            prop_assume!(Vector3::from(axis).norm() > 1e-3);
            let sets = sets_from(&t);
            let h = header();
            let Ok(base) = lax_biomarkers(&sets, &h) else { return Ok(()) };
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle);
            let rd = rot * Vector3::x();
            let cd = rot * Vector3::y();
            let mut moved = h;
            moved.row_dir = [rd.x as f32, rd.y as f32, rd.z as f32];
            moved.col_dir = [cd.x as f32, cd.y as f32, cd.z as f32];
            moved.position_mm = [shift[0] as f32, shift[1] as f32, shift[2] as f32];
            moved.pixel_spacing_mm = [scale as f32, scale as f32];
            let r = lax_biomarkers(&sets, &moved).unwrap();
            let s = moved.pixel_spacing_mm[0] as f64;
            // direction vectors are stored as f32
            prop_assert!((r.gls_percent - base.gls_percent).abs() < 1e-4);
            prop_assert!((r.mapse_mm - s * base.mapse_mm).abs() < 1e-3 * (1.0 + s * base.mapse_mm.abs()));
            prop_assert!((r.tapse_mm.unwrap() - s * base.tapse_mm.unwrap()).abs() < 1e-3 * (1.0 + s * base.tapse_mm.unwrap().abs()));
        }
    }
}
