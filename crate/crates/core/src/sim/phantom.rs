//! Analytic left-ventricle phantom.
//!
//! The LV cavity is an ellipsoid with its long axis on patient z and a fixed
//! apex; the base moves toward the apex in systole. Short-axis slices are
//! stacked along z from base (slice 0) to apex. Patient x/y map to image
//! columns/rows of short-axis frames. The end-diastolic cavity sits half a
//! slice below the stack center so slice centers fall mid-slab.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cmr::labels;
use crate::cmr::perf::{gamma_variate, SliceClass, N_SECTORS};

use super::SimError;

/// Radius of the mitral annulus.
pub const MV_RADIUS_MM: f64 = 12.0;
/// Atrial blood above the valve plane, labeled as LV blood the way a
/// segmenter that cannot see the valve would.
pub const ATRIUM_RADIUS_MM: f64 = 20.0;
/// Lateral tricuspid annulus offset in the four-chamber plane.
pub const TV_OFFSET_MM: f64 = -42.0;

pub const BLOOD_SIGNAL: f32 = 1.0;
pub const MYO_SIGNAL: f32 = 0.3;
pub const BODY_SIGNAL: f32 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pacing {
    /// Acquisition time of one slice.
    pub slice_ms: f64,
    pub gap_ms: f64,
}

impl Default for Pacing {
    fn default() -> Self {
        Self { slice_ms: 300.0, gap_ms: 150.0 }
    }
}

impl Pacing {
    /// Defaults multiplied by `scale`; `None` for a scale of zero.
    pub fn scaled(scale: f64) -> Option<Self> {
        (scale > 0.0).then(|| {
            let d = Self::default();
            Self { slice_ms: d.slice_ms * scale, gap_ms: d.gap_ms * scale }
        })
    }

    /// Send offset of message `index` of `count` in `slice`.
    pub fn offset_ms(&self, slice: usize, index: usize, count: usize) -> f64 {
        slice as f64 * (self.slice_ms + self.gap_ms) + self.slice_ms * index as f64 / count.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub t0_s: f64,
    pub amplitude: f64,
    pub alpha: f64,
    pub beta_s: f64,
}

impl GammaParams {
    pub fn at(&self, t_s: f64) -> f64 {
        gamma_variate(t_s, self.t0_s, self.amplitude, self.alpha, self.beta_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerfParams {
    pub matrix: usize,
    pub spacing_mm: f64,
    /// Per-sector flow, sectors 1..=16 in order.
    pub rest_flows: Vec<f64>,
    pub stress_flows: Vec<f64>,
    /// RV input; the LV curve is the same shape delayed by `delay_s`.
    pub aif: GammaParams,
    pub delay_s: f64,
    pub n_aif_frames: usize,
    pub aif_interval_ms: f64,
    pub aif_matrix: usize,
}

const REST_FLOWS: [f64; N_SECTORS] =
    [1.02, 0.98, 1.05, 0.95, 1.0, 1.03, 0.97, 1.01, 0.99, 1.04, 0.96, 1.0, 1.02, 0.98, 1.01, 0.99];
const RESERVE: [f64; N_SECTORS] = [2.6, 2.7, 2.8, 2.6, 2.7, 2.8, 1.9, 1.7, 1.8, 2.7, 2.6, 2.8, 2.5, 1.8, 2.6, 2.7];

impl Default for PerfParams {
    fn default() -> Self {
        Self {
            matrix: 128,
            spacing_mm: 1.5,
            rest_flows: REST_FLOWS.to_vec(),
            stress_flows: REST_FLOWS.iter().zip(RESERVE).map(|(f, r)| f * r).collect(),
            aif: GammaParams { t0_s: 4.0, amplitude: 1.0, alpha: 3.0, beta_s: 1.5 },
            delay_s: 4.0,
            n_aif_frames: 60,
            aif_interval_ms: 500.0,
            aif_matrix: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub n_slices: usize,
    pub n_phases: usize,
    pub matrix: usize,
    pub n_coils: usize,
    pub fov_mm: f64,
    pub slice_spacing_mm: f64,
    pub slice_thickness_mm: f64,
    /// Cavity semi-axes (x, y, z) at end-diastole and end-systole.
    pub ed_axes_mm: [f64; 3],
    pub es_axes_mm: [f64; 3],
    pub myo_mm: f64,
    pub es_phase: usize,
    pub heart_rate_bpm: f64,
    pub bsa_m2: f64,
    /// Lateral tricuspid excursion toward the apex at end-systole.
    pub tapse_mm: f64,
    pub lax_matrix: usize,
    pub lax_spacing_mm: f64,
    pub pacing: Pacing,
    pub perf: PerfParams,
    /// Peak-to-peak uniform k-space noise.
    pub noise: f64,
    /// Send ground-truth masks/landmarks along with the data.
    pub embed_truth: bool,
    pub patient_key: String,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            n_slices: 11,
            n_phases: 25,
            matrix: 192,
            n_coils: 4,
            fov_mm: 288.0,
            slice_spacing_mm: 10.0,
            slice_thickness_mm: 8.0,
            ed_axes_mm: [26.0, 24.0, 40.0],
            es_axes_mm: [18.0, 16.0, 33.0],
            myo_mm: 8.0,
            es_phase: 10,
            heart_rate_bpm: 68.0,
            bsa_m2: 1.8,
            tapse_mm: 20.0,
            lax_matrix: 128,
            lax_spacing_mm: 1.5,
            pacing: Pacing::default(),
            perf: PerfParams::default(),
            noise: 0.002,
            embed_truth: true,
            patient_key: "phantom".into(),
            seed: 1,
        }
    }
}

/// Cavity shape at one cardiac phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvState {
    pub axes: [f64; 3],
    pub apex_z: f64,
}

impl LvState {
    pub fn center_z(&self) -> f64 {
        self.apex_z + self.axes[2]
    }

    /// Base of the cavity; the mitral annulus sits in this plane.
    pub fn top_z(&self) -> f64 {
        self.apex_z + 2.0 * self.axes[2]
    }

    pub fn volume_ml(&self) -> f64 {
        ellipsoid_ml(self.axes)
    }
}

pub fn ellipsoid_ml(axes: [f64; 3]) -> f64 {
    4.0 / 3.0 * PI * axes[0] * axes[1] * axes[2] / 1000.0
}

/// Part of an ellipsoid with semi-axes `axes` below the plane `h` above its center.
fn truncated_ellipsoid_ml(axes: [f64; 3], h: f64) -> f64 {
    let c = axes[2];
    let h = h.min(c);
    PI * axes[0] * axes[1] * ((h + c) - (h.powi(3) + c.powi(3)) / (3.0 * c * c)) / 1000.0
}

impl PhantomParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Params(m.into()));
        if self.n_slices == 0 || self.n_phases < 2 || self.n_coils == 0 {
            return bad("need at least one slice, two phases and one coil");
        }
        if self.matrix < 8 || self.matrix % 2 != 0 || self.lax_matrix < 8 || self.perf.matrix < 8 || self.perf.aif_matrix < 8 {
            return bad("matrix sizes must be even and at least 8");
        }
        if self.es_phase == 0 || self.es_phase >= self.n_phases {
            return bad("es_phase must lie strictly inside the cycle");
        }
        if self.ed_axes_mm.iter().zip(&self.es_axes_mm).any(|(ed, es)| es > ed || *es <= 0.0) {
            return bad("ES axes must be positive and no larger than ED axes");
        }
        if !(self.pacing.slice_ms > 0.0 && self.pacing.gap_ms > 0.0) {
            return bad("pacing must be positive");
        }
        let positive = [self.fov_mm, self.slice_thickness_mm, self.myo_mm, self.lax_spacing_mm, self.perf.spacing_mm, self.heart_rate_bpm];
        if positive.iter().any(|v| !(*v > 0.0)) || self.slice_spacing_mm < self.slice_thickness_mm {
            return bad("sizes must be positive and slice spacing at least the thickness");
        }
        if self.perf.rest_flows.len() != N_SECTORS || self.perf.stress_flows.len() != N_SECTORS {
            return bad("perfusion needs 16 sector flows per scan");
        }
        if self.perf.n_aif_frames < 8 || !(self.perf.aif_interval_ms > 0.0) {
            return bad("AIF needs at least 8 frames at a positive interval");
        }
        Ok(())
    }

    pub fn pixel_mm(&self) -> f64 {
        self.fov_mm / self.matrix as f64
    }

    pub fn rr_ms(&self) -> f64 {
        60_000.0 / self.heart_rate_bpm
    }

    pub fn trigger_ms(&self, phase: usize) -> f64 {
        phase as f64 * self.rr_ms() / self.n_phases as f64
    }

    /// Contraction weight: 1 at end-diastole (phase 0), 0 at end-systole,
    /// cosine in between.
    pub fn diastole_weight(&self, phase: usize) -> f64 {
        let (p, es, n) = (phase as f64, self.es_phase as f64, self.n_phases as f64);
        if p <= es {
            (1.0 + (PI * p / es).cos()) / 2.0
        } else {
            (1.0 - (PI * (p - es) / (n - es)).cos()) / 2.0
        }
    }

    pub fn state(&self, phase: usize) -> LvState {
        let w = self.diastole_weight(phase);
        let axes = std::array::from_fn(|i| self.es_axes_mm[i] + w * (self.ed_axes_mm[i] - self.es_axes_mm[i]));
        LvState { axes, apex_z: -self.ed_axes_mm[2] - self.slice_spacing_mm / 2.0 }
    }

    /// Patient z of short-axis slice `s`; slice 0 is the most basal.
    pub fn slice_z(&self, s: usize) -> f64 {
        ((self.n_slices - 1) as f64 / 2.0 - s as f64) * self.slice_spacing_mm
    }

    /// Label of the short-axis phantom at patient `(x, y, z)`.
    pub fn label_at(&self, st: &LvState, x: f64, y: f64, z: f64) -> u16 {
        let [a, b, c] = st.axes;
        let t = self.myo_mm;
        let dz = z - st.center_z();
        if (x / a).powi(2) + (y / b).powi(2) + (dz / c).powi(2) < 1.0 {
            return labels::LV_BLOOD;
        }
        if z > st.top_z() {
            return if x * x + y * y < ATRIUM_RADIUS_MM.powi(2) { labels::LV_BLOOD } else { labels::BACKGROUND };
        }
        if (x / (a + t)).powi(2) + (y / (b + t)).powi(2) + (dz / (c + t)).powi(2) < 1.0 {
            return labels::LV_MYO;
        }
        labels::BACKGROUND
    }

    /// Patient `(x, y)` of short-axis pixel `(r, c)`.
    pub fn sax_xy(&self, r: usize, c: usize) -> (f64, f64) {
        let (ps, half) = (self.pixel_mm(), (self.matrix / 2) as f64);
        ((c as f64 - half) * ps, (r as f64 - half) * ps)
    }

    /// Ground-truth label map of one short-axis slice and phase.
    pub fn sax_labels(&self, slice: usize, phase: usize) -> Vec<u16> {
        let st = self.state(phase);
        let z = self.slice_z(slice);
        let n = self.matrix;
        (0..n * n)
            .map(|i| {
                let (x, y) = self.sax_xy(i / n, i % n);
                self.label_at(&st, x, y, z)
            })
            .collect()
    }

    pub fn sax_image(&self, labels_: &[u16]) -> Vec<f32> {
        let n = self.matrix;
        let body = (0.42 * self.fov_mm).powi(2);
        labels_
            .iter()
            .enumerate()
            .map(|(i, &l)| match l {
                labels::LV_BLOOD => BLOOD_SIGNAL,
                labels::LV_MYO => MYO_SIGNAL,
                _ => {
                    let (x, y) = self.sax_xy(i / n, i % n);
                    if x * x + y * y < body {
                        BODY_SIGNAL
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }

    /// Complex sensitivity of coil `j` at patient `(x, y)`, normalized so the
    /// root-sum-of-squares over coils is 1 everywhere.
    pub fn coil_sensitivities(&self, x: f64, y: f64) -> Vec<num_complex::Complex32> {
        let n = self.n_coils as f64;
        let (ring, sigma) = (0.6 * self.fov_mm, 0.5 * self.fov_mm);
        let raw: Vec<(f64, f64)> = (0..self.n_coils)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / n;
                let (cx, cy) = (ring * th.cos(), ring * th.sin());
                let mag = (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp();
                let phase = th + 0.01 * (x * th.cos() + y * th.sin());
                (mag, phase)
            })
            .collect();
        let norm = raw.iter().map(|(m, _)| m * m).sum::<f64>().sqrt();
        raw.iter()
            .map(|&(m, p)| num_complex::Complex32::from_polar((m / norm) as f32, p as f32))
            .collect()
    }

    /// Blood volume of the cavity at end-diastole / end-systole.
    pub fn edv_ml(&self) -> f64 {
        ellipsoid_ml(self.ed_axes_mm)
    }

    pub fn esv_ml(&self) -> f64 {
        ellipsoid_ml(self.es_axes_mm)
    }

    /// Myocardium below the valve plane at end-diastole, in grams.
    pub fn ed_mass_g(&self) -> f64 {
        let t = self.myo_mm;
        let [a, b, c] = self.ed_axes_mm;
        crate::cmr::sax::MYO_DENSITY * (truncated_ellipsoid_ml([a + t, b + t, c + t], c) - ellipsoid_ml(self.ed_axes_mm))
    }
}

/// Short-axis perfusion geometry of one slice class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfSlice {
    pub class: SliceClass,
    pub blood_mm: f64,
    pub myo_mm: f64,
    pub rv_mm: f64,
}

pub const PERF_SLICES: [PerfSlice; 3] = [
    PerfSlice { class: SliceClass::Basal, blood_mm: 24.0, myo_mm: 34.0, rv_mm: 50.0 },
    PerfSlice { class: SliceClass::Mid, blood_mm: 21.0, myo_mm: 30.0, rv_mm: 45.0 },
    PerfSlice { class: SliceClass::Apical, blood_mm: 15.0, myo_mm: 23.0, rv_mm: 34.0 },
];

/// Angular extent of the RV, counterclockwise in image angle; the
/// counterclockwise end is the insertion point where sector 1 starts.
pub const RV_ARC_DEG: (f64, f64) = (110.0, 230.0);

/// Sector of a myocardium pixel at image angle `a` for the phantom's own
/// insertion point, counterclockwise, 1-based.
pub fn phantom_sector(class: SliceClass, a: f64) -> u16 {
    let n = class.sector_count();
    let rel = (a - RV_ARC_DEG.1).rem_euclid(360.0);
    class.sector_base() + ((rel / (360.0 / n as f64)) as u16).min(n - 1) + 1
}

impl PerfParams {
    /// Label map and flow map of one perfusion slice.
    pub fn flow_slice(&self, s: &PerfSlice, flows: &[f64]) -> (Vec<u16>, Vec<f32>) {
        let n = self.matrix;
        let half = (n / 2) as f64;
        let mut lab = vec![labels::BACKGROUND; n * n];
        let mut flow = vec![0.0f32; n * n];
        for r in 0..n {
            for c in 0..n {
                let (dr, dc) = (r as f64 - half, c as f64 - half);
                let d = (dr * dr + dc * dc).sqrt() * self.spacing_mm;
                let a = crate::cmr::perf::pixel_angle(r as f64, c as f64, half, half);
                let i = r * n + c;
                if d < s.blood_mm {
                    lab[i] = labels::LV_BLOOD;
                } else if d < s.myo_mm {
                    lab[i] = labels::LV_MYO;
                    flow[i] = flows[phantom_sector(s.class, a) as usize - 1] as f32;
                } else if d < s.rv_mm && a >= RV_ARC_DEG.0 && a <= RV_ARC_DEG.1 {
                    lab[i] = labels::RV_BLOOD;
                }
            }
        }
        (lab, flow)
    }

    /// Static blood-pool labels of the AIF series.
    pub fn aif_labels(&self) -> Vec<u16> {
        let n = self.aif_matrix;
        let (r0, rv_c, lv_c, rad) = (n as f64 / 2.0, n as f64 * 0.3, n as f64 * 0.62, n as f64 * 0.12);
        (0..n * n)
            .map(|i| {
                let (r, c) = ((i / n) as f64, (i % n) as f64);
                if (r - r0).hypot(c - lv_c) < rad {
                    labels::LV_BLOOD
                } else if (r - r0).hypot(c - rv_c) < rad {
                    labels::RV_BLOOD
                } else {
                    labels::BACKGROUND
                }
            })
            .collect()
    }

    pub fn aif_time_s(&self, frame: usize) -> f64 {
        frame as f64 * self.aif_interval_ms / 1000.0
    }

    pub fn aif_frame(&self, frame: usize, labels_: &[u16]) -> Vec<f32> {
        let t = self.aif_time_s(frame);
        let rv = 0.1 + self.aif.at(t);
        let lv = 0.1 + 0.8 * self.aif.at(t - self.delay_s);
        labels_
            .iter()
            .map(|&l| match l {
                labels::RV_BLOOD => rv as f32,
                labels::LV_BLOOD => lv as f32,
                _ => 0.05,
            })
            .collect()
    }
}
