//! Short-axis volumetry: per-phase LV volumes, ED/ES, valve-plane slice
//! inclusion, function biomarkers and per-slice wall thickness.

use log::warn;
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::wire::ImageHeader;

use super::geometry::{slice_center, Point3};
use super::lax::{argmax, argmin, lax_phase_for, ViewGeometry};
use super::{labels, AnalysisError, SegmentationMask};

/// Myocardial tissue density, g/mL.
pub const MYO_DENSITY: f64 = 1.05;

/// Report flag when no long-axis landmarks were available for the session.
pub const FLAG_UNCORRECTED: &str = "uncorrected extent";
/// Report flag when heart rate or BSA is missing from the session header.
pub const FLAG_NO_VITALS: &str = "missing heart rate or BSA";

const COLLINEAR_SPREAD_MM: f64 = 1e-6;
const APEX_ON_PLANE_MM: f64 = 1e-9;

/// Voxel volume of the slab covered by one pixel, in mL.
pub fn voxel_ml(h: &ImageHeader) -> f64 {
    h.pixel_spacing_mm[0] as f64 * h.pixel_spacing_mm[1] as f64 * h.slice_spacing_mm as f64 / 1000.0
}

/// Volume of `label` in each slice of one phase; zero for excluded slices.
pub fn slice_volumes(masks: &[&SegmentationMask], included: &[bool], label: u16) -> Vec<f64> {
    masks
        .iter()
        .zip(included)
        .map(|(m, &inc)| if inc { m.count(label) as f64 * voxel_ml(&m.header) } else { 0.0 })
        .collect()
}

/// LV blood volume of one phase over the included slices, in mL.
pub fn blood_volume(masks: &[&SegmentationMask], included: &[bool]) -> f64 {
    if !included.iter().any(|&i| i) {
        warn!("no slices included in blood volume");
    }
    slice_volumes(masks, included, labels::LV_BLOOD).iter().sum()
}

/// `(ed, es)` as argmax/argmin of the volumes, lowest index on ties.
pub fn find_ed_es(volumes: &[f64]) -> Result<(usize, usize), AnalysisError> {
    if volumes.len() < 2 {
        return Err(AnalysisError::TooFewPhases { need: 2, got: volumes.len() });
    }
    Ok((argmax(volumes), argmin(volumes)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValvePlane {
    pub point: Point3,
    /// Unit normal; the apex has positive signed distance.
    pub normal: Point3,
}

impl ValvePlane {
    pub fn signed_distance(&self, x: &Point3) -> f64 {
        (x - self.point).dot(&self.normal)
    }
}

/// Least-squares plane through the mitral points, oriented toward the apex.
pub fn fit_valve_plane(points: &[Point3], apex: &Point3) -> Result<ValvePlane, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Point3>() / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - centroid;
        acc + d * d.transpose()
    });
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // the middle principal spread vanishes when the points lie on a line
    if (eig.eigenvalues[order[1]].max(0.0) / n).sqrt() <= COLLINEAR_SPREAD_MM {
        return Err(AnalysisError::Collinear);
    }
    let mut normal: Point3 = eig.eigenvectors.column(order[0]).normalize();
    let d = (apex - centroid).dot(&normal);
    if d.abs() < APEX_ON_PLANE_MM {
        return Err(AnalysisError::ApexOnPlane);
    }
    if d < 0.0 {
        normal = -normal;
    }
    Ok(ValvePlane { point: centroid, normal })
}

/// True when the slice center lies strictly on the apical side of the plane.
pub fn slice_included(plane: &ValvePlane, h: &ImageHeader) -> Result<bool, AnalysisError> {
    Ok(plane.signed_distance(&slice_center(h)?) > 0.0)
}

/// Valve plane at a short-axis phase from the stored long-axis geometry.
/// Mitral points of every view are pooled; the apex is their mean.
pub fn valve_plane_at(views: &[ViewGeometry], sax_phase: usize, n_sax: usize) -> Result<ValvePlane, AnalysisError> {
    let mut mitral = Vec::new();
    let mut apex = Vec::new();
    for v in views {
        let p = lax_phase_for(sax_phase, n_sax, v.mitral.len());
        let (Some(m), Some(a)) = (v.mitral.get(p), v.apex.get(p)) else { continue };
        mitral.extend(m.iter().map(|x| Point3::from(*x)));
        apex.push(Point3::from(*a));
    }
    if apex.is_empty() {
        return Err(AnalysisError::TooFewPoints(0));
    }
    let apex = apex.iter().sum::<Point3>() / apex.len() as f64;
    fit_valve_plane(&mitral, &apex)
}

/// Function biomarkers from volumes and mass. Optional values need heart
/// rate and/or BSA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionValues {
    pub ef_percent: f64,
    pub edv_ml: f64,
    pub esv_ml: f64,
    pub sv_ml: f64,
    pub mass_g: f64,
    pub mcf_percent: f64,
    pub co_l_min: Option<f64>,
    pub edvi: Option<f64>,
    pub esvi: Option<f64>,
    pub svi: Option<f64>,
    pub massi: Option<f64>,
    pub ci: Option<f64>,
}

impl FunctionValues {
    pub fn compute(edv: f64, esv: f64, mass: f64, hr_bpm: Option<f64>, bsa_m2: Option<f64>) -> Result<Self, AnalysisError> {
        if edv == 0.0 {
            return Err(AnalysisError::ZeroEdv);
        }
        let sv = edv - esv;
        let co = hr_bpm.filter(|h| *h > 0.0).map(|hr| sv * hr / 1000.0);
        let bsa = bsa_m2.filter(|b| *b > 0.0);
        let idx = |v: f64| bsa.map(|b| v / b);
        let myo_ml = mass / MYO_DENSITY;
        Ok(Self {
            ef_percent: 100.0 * sv / edv,
            edv_ml: edv,
            esv_ml: esv,
            sv_ml: sv,
            mass_g: mass,
            mcf_percent: if myo_ml > 0.0 { 100.0 * sv / myo_ml } else { f64::NAN },
            co_l_min: co,
            edvi: idx(edv),
            esvi: idx(esv),
            svi: idx(sv),
            massi: idx(mass),
            ci: co.and_then(idx),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaxReport {
    pub values: FunctionValues,
    pub ed_phase: usize,
    pub es_phase: usize,
    /// Uncorrected (all-slice) blood volume of every phase.
    pub phase_volumes_ml: Vec<f64>,
    pub included_ed: Vec<bool>,
    pub included_es: Vec<bool>,
    pub slice_edv_ml: Vec<f64>,
    pub slice_esv_ml: Vec<f64>,
    pub slice_mass_g: Vec<f64>,
    /// Maximal ED wall thickness per slice; absent where the slice has no wall.
    pub slice_max_wall_mm: Vec<Option<f64>>,
    pub flags: Vec<String>,
}

/// Biomarkers of a short-axis cine. `stack[s][p]` is the mask of slice `s`
/// at phase `p`; slices are in acquisition order. Without long-axis
/// geometry every slice is included and the report is flagged.
pub fn sax_biomarkers(
    stack: &[Vec<SegmentationMask>],
    lax: Option<&[ViewGeometry]>,
    hr_bpm: Option<f64>,
    bsa_m2: Option<f64>,
) -> Result<SaxReport, AnalysisError> {
    let n_phases = stack.iter().map(Vec::len).min().unwrap_or(0);
    if n_phases < 2 {
        return Err(AnalysisError::TooFewPhases { need: 2, got: n_phases });
    }
    let phase = |p: usize| stack.iter().map(|s| &s[p]).collect::<Vec<_>>();
    let all = vec![true; stack.len()];
    let phase_volumes: Vec<f64> = (0..n_phases).map(|p| blood_volume(&phase(p), &all)).collect();
    let (ed, es) = find_ed_es(&phase_volumes)?;

    let mut flags = Vec::new();
    let inclusion = |p: usize| -> Result<Vec<bool>, AnalysisError> {
        let plane = valve_plane_at(lax.unwrap_or_default(), p, n_phases)?;
        stack.iter().map(|s| slice_included(&plane, &s[p].header)).collect()
    };
    let (included_ed, included_es) = match lax {
        Some(v) if !v.is_empty() => (inclusion(ed)?, inclusion(es)?),
        _ => {
            flags.push(FLAG_UNCORRECTED.to_string());
            (all.clone(), all)
        }
    };

    let slice_edv = slice_volumes(&phase(ed), &included_ed, labels::LV_BLOOD);
    let slice_esv = slice_volumes(&phase(es), &included_es, labels::LV_BLOOD);
    let slice_mass: Vec<f64> = slice_volumes(&phase(ed), &included_ed, labels::LV_MYO).iter().map(|v| v * MYO_DENSITY).collect();
    let edv: f64 = slice_edv.iter().sum();
    let esv: f64 = slice_esv.iter().sum();
    let mass: f64 = slice_mass.iter().sum();
    if hr_bpm.is_none() || bsa_m2.is_none() {
        flags.push(FLAG_NO_VITALS.to_string());
    }
    let values = FunctionValues::compute(edv, esv, mass, hr_bpm, bsa_m2)?;
    let walls = phase(ed).iter().map(|m| max_wall_thickness(m).ok()).collect();
    Ok(SaxReport {
        values,
        ed_phase: ed,
        es_phase: es,
        phase_volumes_ml: phase_volumes,
        included_ed,
        included_es,
        slice_edv_ml: slice_edv,
        slice_esv_ml: slice_esv,
        slice_mass_g: slice_mass,
        slice_max_wall_mm: walls,
        flags,
    })
}

const RAY_STEP_PX: f64 = 0.25;
const N_RAYS: usize = 360;

#[derive(Clone, Copy, PartialEq)]
enum Tissue {
    Blood,
    Myo,
    Outside,
}

/// Tissue at a fractional pixel position: bilinear weights of the four
/// surrounding pixel centers, largest class wins.
fn tissue_at(m: &SegmentationMask, r: f64, c: f64) -> Tissue {
    let (r0, c0) = (r.floor(), c.floor());
    let (fr, fc) = (r - r0, c - c0);
    let mut w = [0.0f64; 3];
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let class = match m.get(r0 as isize + dr, c0 as isize + dc) {
                labels::LV_BLOOD => 0,
                labels::LV_MYO => 1,
                _ => 2,
            };
            w[class] += wr * wc;
        }
    }
    if w[0] >= w[1] && w[0] >= w[2] {
        Tissue::Blood
    } else if w[1] >= w[2] {
        Tissue::Myo
    } else {
        Tissue::Outside
    }
}

/// Largest wall thickness over 360 rays from the LV blood centroid, in mm.
/// Per ray, thickness runs from the last blood→myocardium transition to the
/// last myocardium→outside transition.
pub fn max_wall_thickness(m: &SegmentationMask) -> Result<f64, AnalysisError> {
    if m.count(labels::LV_MYO) == 0 {
        return Err(AnalysisError::NoMyocardium);
    }
    let (r0, c0) = m.centroid(labels::LV_BLOOD).ok_or(AnalysisError::NoBloodPool)?;
    let (sr, sc) = (m.header.pixel_spacing_mm[0] as f64, m.header.pixel_spacing_mm[1] as f64);
    let reach = ((m.rows() + m.cols()) as f64) + 2.0;
    let steps = (reach / RAY_STEP_PX) as usize;
    let mut best: Option<f64> = None;
    for k in 0..N_RAYS {
        let theta = (k as f64).to_radians();
        let (dr, dc) = (-theta.sin(), theta.cos());
        let mut prev = Tissue::Blood;
        let (mut endo, mut epi) = (None, None);
        for i in 1..=steps {
            let t = i as f64 * RAY_STEP_PX;
            let cur = tissue_at(m, r0 + dr * t, c0 + dc * t);
            let mid = t - RAY_STEP_PX / 2.0;
            match (prev, cur) {
                (Tissue::Blood, Tissue::Myo) => endo = Some(mid),
                (Tissue::Myo, Tissue::Outside) => epi = Some(mid),
                _ => {}
            }
            prev = cur;
        }
        if let (Some(a), Some(b)) = (endo, epi) {
            if b > a {
                let mm = (b - a) * ((dr * sr).powi(2) + (dc * sc).powi(2)).sqrt();
                best = Some(best.map_or(mm, |x: f64| x.max(mm)));
            }
        }
    }
    best.ok_or(AnalysisError::MissingBoundary("epicardial"))
}
