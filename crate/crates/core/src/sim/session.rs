//! Deterministic synthetic sessions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex32;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{GT_LANDMARK_META, GT_MASK_META};
use crate::cmr::geometry::{to_patient_coords, to_pixel_coords};
use crate::cmr::lax::{View, APEX, MV1, MV2, TV_LAT, VIEW_META};
use crate::cmr::perf::N_SECTORS;
use crate::cmr::{labels, rle_encode, PERF_AIF, PERF_FLOW, PERF_SERIES_META, SLICE_CLASS_META};
use crate::recon::Fft2;
use crate::stages::GROUND_TRUTH_ROLE;
use crate::wire::meta::keys;
use crate::wire::{flags, ImageFrame, ImageHeader, KSpaceReadout, Message, Meta, Pixels, ReadoutHeader, HEADER_VERSION};

use super::phantom::{PhantomParams, MV_RADIUS_MM, PERF_SLICES, TV_OFFSET_MM};
use super::truth::{GroundTruth, LaxTruth, PerfTruth, SaxTruth, ViewTruth};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    Sax,
    Lax,
    PerfRest,
    PerfStress,
}

impl ScanKind {
    pub const ALL: [ScanKind; 4] = [ScanKind::Sax, ScanKind::Lax, ScanKind::PerfRest, ScanKind::PerfStress];

    pub fn as_str(self) -> &'static str {
        match self {
            ScanKind::Sax => "sax",
            ScanKind::Lax => "lax",
            ScanKind::PerfRest => "perf_rest",
            ScanKind::PerfStress => "perf_stress",
        }
    }

    /// Built-in chain serving this kind.
    pub fn default_chain(self) -> &'static str {
        match self {
            ScanKind::Sax => "sax",
            ScanKind::Lax => "lax",
            ScanKind::PerfRest | ScanKind::PerfStress => "perf",
        }
    }
}

impl fmt::Display for ScanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScanKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        ScanKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| SimError::Params(format!("unknown scan kind {s:?}")))
    }
}

/// Position of a paced message within its slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub slice: usize,
    pub index: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planned {
    pub message: Message,
    pub slot: Option<Slot>,
}

impl Planned {
    fn free(message: Message) -> Self {
        Self { message, slot: None }
    }
}

/// A session description; messages are generated block by block on demand.
#[derive(Debug, Clone)]
pub struct Session {
    pub kind: ScanKind,
    pub params: PhantomParams,
    pub chain: String,
}

const LAX_VIEWS: [View; 2] = [View::Ch4, View::Ch2];

impl Session {
    pub fn new(kind: ScanKind, params: PhantomParams) -> Result<Self, SimError> {
        params.validate()?;
        Ok(Self { kind, chain: kind.default_chain().into(), params })
    }

    pub fn with_chain(mut self, chain: &str) -> Self {
        self.chain = chain.into();
        self
    }

    pub fn header(&self) -> Meta {
        let p = &self.params;
        let mut m = Meta::new()
            .with(keys::PATIENT_KEY, p.patient_key.clone())
            .with(keys::SCAN_KIND, self.kind.as_str())
            .with(keys::HEART_RATE, p.heart_rate_bpm.to_string())
            .with(keys::BSA, p.bsa_m2.to_string())
            .with(keys::RESPIRATORY, "breath-hold");
        if self.kind == ScanKind::Sax {
            m.push(keys::FOV_READ, p.fov_mm.to_string());
            m.push(keys::FOV_PHASE, p.fov_mm.to_string());
            m.push(keys::SLICE_THICKNESS, p.slice_thickness_mm.to_string());
            m.push(keys::SLICE_SPACING, p.slice_spacing_mm.to_string());
        }
        m
    }

    fn blocks(&self) -> usize {
        match self.kind {
            ScanKind::Sax => self.params.n_slices,
            ScanKind::Lax => LAX_VIEWS.len(),
            ScanKind::PerfRest | ScanKind::PerfStress => 2,
        }
    }

    fn block(&self, b: usize) -> Vec<Planned> {
        match self.kind {
            ScanKind::Sax => self.sax_slice(b),
            ScanKind::Lax => self.lax_view(b),
            ScanKind::PerfRest | ScanKind::PerfStress if b == 0 => self.flow_maps(),
            _ => self.aif_series(),
        }
    }

    /// Every message in send order.
    pub fn messages(&self) -> impl Iterator<Item = Planned> + '_ {
        let head = [
            Planned::free(Message::ConfigName(self.chain.clone())),
            Planned::free(Message::SessionHeader(self.header())),
        ];
        head.into_iter()
            .chain((0..self.blocks()).flat_map(move |b| self.block(b)))
            .chain(std::iter::once(Planned::free(Message::Close)))
    }

    pub fn collect(&self) -> Vec<Message> {
        self.messages().map(|p| p.message).collect()
    }

    pub fn truth(&self) -> GroundTruth {
        let p = &self.params;
        let mut t = GroundTruth { kind: self.kind, ..Default::default() };
        match self.kind {
            ScanKind::Sax => {
                let (edv, esv) = (p.edv_ml(), p.esv_ml());
                t.sax = Some(SaxTruth {
                    edv_ml: edv,
                    esv_ml: esv,
                    ef_percent: 100.0 * (edv - esv) / edv,
                    mass_g: p.ed_mass_g(),
                    ed_phase: 0,
                    es_phase: p.es_phase,
                    recon_frames: p.n_slices * p.n_phases,
                })
            }
            ScanKind::Lax => t.lax = Some(self.lax_truth()),
            ScanKind::PerfRest | ScanKind::PerfStress => {
                let stress = self.kind == ScanKind::PerfStress;
                let (own, partner) = if stress {
                    (&p.perf.stress_flows, &p.perf.rest_flows)
                } else {
                    (&p.perf.rest_flows, &p.perf.stress_flows)
                };
                t.perf = Some(PerfTruth {
                    flows: own.clone(),
                    mpr: p.perf.stress_flows.iter().zip(&p.perf.rest_flows).map(|(s, r)| s / r).collect(),
                    partner_flows: partner.clone(),
                    ptt_s: p.perf.delay_s,
                })
            }
        }
        t
    }

    fn readout_header(&self, slice: usize, phase: usize, kline: usize) -> ReadoutHeader {
        let p = &self.params;
        ReadoutHeader {
            version: HEADER_VERSION,
            flags: 0,
            scan_counter: ((slice * p.n_phases + phase) * p.matrix + kline) as u32,
            num_samples: p.matrix as u16,
            num_coils: p.n_coils as u16,
            kline_idx: kline as u16,
            slice_idx: slice as u16,
            phase_idx: phase as u16,
            repetition_idx: 0,
            set_idx: 0,
            average_idx: 0,
            sample_time_ns: (p.trigger_ms(phase) * 1e6).round() as u32,
            position_mm: [0.0, 0.0, p.slice_z(slice) as f32],
            read_dir: [1.0, 0.0, 0.0],
            phase_dir: [0.0, 1.0, 0.0],
            slice_dir: [0.0, 0.0, -1.0],
        }
    }

    /// Header of a reconstructed short-axis frame, as the server builds it.
    pub fn sax_image_header(&self, slice: usize, phase: usize) -> ImageHeader {
        let p = &self.params;
        let ps = p.pixel_mm() as f32;
        let half = (p.matrix / 2) as f32 * ps;
        ImageHeader {
            version: HEADER_VERSION,
            flags: 0,
            series_idx: 0,
            slice_idx: slice as u16,
            phase_idx: phase as u16,
            rows: p.matrix as u16,
            cols: p.matrix as u16,
            pixel_spacing_mm: [ps, ps],
            slice_thickness_mm: p.slice_thickness_mm as f32,
            slice_spacing_mm: p.slice_spacing_mm as f32,
            trigger_time_ms: (p.trigger_ms(phase) * 1e6).round() as f32 / 1e6,
            position_mm: [-half, -half, p.slice_z(slice) as f32],
            row_dir: [0.0, 1.0, 0.0],
            col_dir: [1.0, 0.0, 0.0],
        }
    }

    fn sax_slice(&self, slice: usize) -> Vec<Planned> {
        let p = &self.params;
        let n = p.matrix;
        let fft = Fft2::new(n, n);
        let sens: Vec<Vec<Complex32>> = (0..n * n)
            .map(|i| {
                let (x, y) = p.sax_xy(i / n, i % n);
                p.coil_sensitivities(x, y)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ ((slice as u64 + 1) << 32));
        let mut out = Vec::new();
        let mut kspace: Vec<Vec<Vec<Complex32>>> = Vec::with_capacity(p.n_phases);
        for phase in 0..p.n_phases {
            let lab = p.sax_labels(slice, phase);
            let img = p.sax_image(&lab);
            if p.embed_truth {
                out.push(Planned::free(Message::Image(ImageFrame {
                    header: self.sax_image_header(slice, phase),
                    meta: Meta::new().with("role", GROUND_TRUTH_ROLE),
                    pixels: Pixels::Label(lab),
                })));
            }
            let coils = (0..p.n_coils)
                .map(|j| {
                    let mut plane: Vec<Complex32> = img.iter().zip(&sens).map(|(v, s)| s[j] * *v).collect();
                    fft.forward(&mut plane);
                    plane
                })
                .collect();
            kspace.push(coils);
        }
        let amp = p.noise as f32 / 2.0;
        let count = p.n_phases * n;
        for phase in 0..p.n_phases {
            for k in 0..n {
                let mut samples = Vec::with_capacity(p.n_coils * n);
                for coil in &kspace[phase] {
                    for v in &coil[k * n..(k + 1) * n] {
                        let e = if amp > 0.0 {
                            Complex32::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))
                        } else {
                            Complex32::new(0.0, 0.0)
                        };
                        samples.push(*v + e);
                    }
                }
                let mut header = self.readout_header(slice, phase, k);
                let index = phase * n + k;
                if index + 1 == count {
                    header.flags |= flags::LAST_IN_SLICE;
                    if slice + 1 == p.n_slices {
                        header.flags |= flags::LAST_IN_SCAN;
                    }
                }
                out.push(Planned {
                    message: Message::Acquisition(KSpaceReadout { header, samples }),
                    slot: Some(Slot { slice, index, count }),
                });
            }
        }
        out
    }

    /// Header of a long-axis frame; both views are centered on the patient
    /// origin with rows running from base to apex.
    pub fn lax_header(&self, view: View, phase: usize) -> ImageHeader {
        let p = &self.params;
        let ps = p.lax_spacing_mm as f32;
        let half = (p.lax_matrix / 2) as f32 * ps;
        let (col_dir, series) = match view {
            View::Ch4 => ([1.0, 0.0, 0.0], 0),
            View::Ch2 => ([0.0, 1.0, 0.0], 1),
        };
        let row_dir = [0.0, 0.0, -1.0];
        let position = std::array::from_fn(|i| -half * row_dir[i] - half * col_dir[i]);
        ImageHeader {
            version: HEADER_VERSION,
            flags: 0,
            series_idx: series,
            slice_idx: 0,
            phase_idx: phase as u16,
            rows: p.lax_matrix as u16,
            cols: p.lax_matrix as u16,
            pixel_spacing_mm: [ps, ps],
            slice_thickness_mm: p.slice_thickness_mm as f32,
            slice_spacing_mm: p.slice_spacing_mm as f32,
            trigger_time_ms: p.trigger_ms(phase) as f32,
            position_mm: position,
            row_dir,
            col_dir,
        }
    }

    /// Landmarks of one view and phase in patient coordinates.
    pub fn lax_points(&self, view: View, phase: usize) -> BTreeMap<String, nalgebra::Vector3<f64>> {
        let p = &self.params;
        let st = p.state(phase);
        let top = st.top_z();
        let lateral = |v: f64| match view {
            View::Ch4 => nalgebra::Vector3::new(v, 0.0, 0.0),
            View::Ch2 => nalgebra::Vector3::new(0.0, v, 0.0),
        };
        let z = nalgebra::Vector3::z();
        let mut m = BTreeMap::new();
        m.insert(MV1.to_string(), lateral(-MV_RADIUS_MM) + z * top);
        m.insert(MV2.to_string(), lateral(MV_RADIUS_MM) + z * top);
        m.insert(APEX.to_string(), z * st.apex_z);
        if view == View::Ch4 {
            let ed_top = p.state(0).top_z();
            let tv_z = ed_top - (1.0 - p.diastole_weight(phase)) * p.tapse_mm;
            m.insert(TV_LAT.to_string(), lateral(TV_OFFSET_MM) + z * tv_z);
        }
        m
    }

    pub fn lax_pixels(&self, view: View, phase: usize) -> BTreeMap<String, (f64, f64)> {
        let h = self.lax_header(view, phase);
        self.lax_points(view, phase).into_iter().map(|(k, v)| (k, to_pixel_coords(&v, &h))).collect()
    }

    fn lax_view(&self, b: usize) -> Vec<Planned> {
        let p = &self.params;
        let view = LAX_VIEWS[b];
        (0..p.n_phases)
            .map(|phase| {
                let h = self.lax_header(view, phase);
                let st = p.state(phase);
                let n = p.lax_matrix;
                let pixels = (0..n * n)
                    .map(|i| {
                        let x = to_patient_coords(((i / n) as f64, (i % n) as f64), &h).expect("unit directions");
                        match p.label_at(&st, x.x, x.y, x.z) {
                            labels::LV_BLOOD => super::phantom::BLOOD_SIGNAL,
                            labels::LV_MYO => super::phantom::MYO_SIGNAL,
                            _ => super::phantom::BODY_SIGNAL,
                        }
                    })
                    .collect();
                let mut meta = Meta::new().with(VIEW_META, view.as_str());
                if p.embed_truth {
                    for (name, (r, c)) in self.lax_pixels(view, phase) {
                        meta.push(GT_LANDMARK_META, format!("{name},{r},{c}"));
                    }
                }
                Planned::free(Message::Image(ImageFrame { header: h, meta, pixels: Pixels::Magnitude(pixels) }))
            })
            .collect()
    }

    fn lax_truth(&self) -> LaxTruth {
        let p = &self.params;
        let views = LAX_VIEWS
            .iter()
            .map(|&view| {
                let length = |phase| {
                    let pts = self.lax_points(view, phase);
                    ((pts[MV1] + pts[MV2]) / 2.0 - pts[APEX]).norm()
                };
                let lengths: Vec<f64> = (0..p.n_phases).map(length).collect();
                let (ed, es) = (lengths[0], lengths[p.es_phase]);
                let (pts_ed, pts_es) = (self.lax_points(view, 0), self.lax_points(view, p.es_phase));
                let tapse = (view == View::Ch4).then(|| {
                    let axis = (pts_ed[APEX] - pts_ed[TV_LAT]).normalize();
                    (pts_es[TV_LAT] - pts_ed[TV_LAT]).dot(&axis)
                });
                ViewTruth {
                    view,
                    gls_percent: 100.0 * (ed - es) / ed,
                    mapse_mm: p.state(0).top_z() - p.state(p.es_phase).top_z(),
                    tapse_mm: tapse,
                    lengths_mm: lengths,
                    landmarks: (0..p.n_phases).map(|ph| self.lax_pixels(view, ph)).collect(),
                }
            })
            .collect();
        LaxTruth { views }
    }

    fn perf_header(&self, slice: usize, n: usize, spacing: f64, series: u16, phase: usize, t_ms: f64) -> ImageHeader {
        let half = (n / 2) as f32 * spacing as f32;
        ImageHeader {
            version: HEADER_VERSION,
            flags: 0,
            series_idx: series,
            slice_idx: slice as u16,
            phase_idx: phase as u16,
            rows: n as u16,
            cols: n as u16,
            pixel_spacing_mm: [spacing as f32; 2],
            slice_thickness_mm: self.params.slice_thickness_mm as f32,
            slice_spacing_mm: self.params.slice_spacing_mm as f32,
            trigger_time_ms: t_ms as f32,
            position_mm: [-half, -half, 20.0 - 20.0 * slice as f32],
            row_dir: [0.0, 1.0, 0.0],
            col_dir: [1.0, 0.0, 0.0],
        }
    }

    fn flows(&self) -> &[f64] {
        match self.kind {
            ScanKind::PerfStress => &self.params.perf.stress_flows,
            _ => &self.params.perf.rest_flows,
        }
    }

    fn flow_maps(&self) -> Vec<Planned> {
        let pp = &self.params.perf;
        PERF_SLICES
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (lab, flow) = pp.flow_slice(s, self.flows());
                let mut meta = Meta::new().with(PERF_SERIES_META, PERF_FLOW).with(SLICE_CLASS_META, s.class.as_str());
                if self.params.embed_truth {
                    meta.push(GT_MASK_META, rle_encode(&lab));
                }
                Planned::free(Message::Image(ImageFrame {
                    header: self.perf_header(i, pp.matrix, pp.spacing_mm, 0, 0, 0.0),
                    meta,
                    pixels: Pixels::Magnitude(flow),
                }))
            })
            .collect()
    }

    fn aif_series(&self) -> Vec<Planned> {
        let pp = &self.params.perf;
        let lab = pp.aif_labels();
        let rle = rle_encode(&lab);
        let spacing = pp.spacing_mm * pp.matrix as f64 / pp.aif_matrix as f64;
        (0..pp.n_aif_frames)
            .map(|f| {
                let mut meta = Meta::new().with(PERF_SERIES_META, PERF_AIF);
                if self.params.embed_truth {
                    meta.push(GT_MASK_META, rle.clone());
                }
                Planned::free(Message::Image(ImageFrame {
                    header: self.perf_header(1, pp.aif_matrix, spacing, 1, f, pp.aif_time_s(f) * 1000.0),
                    meta,
                    pixels: Pixels::Magnitude(pp.aif_frame(f, &lab)),
                }))
            })
            .collect()
    }
}

/// Full message list and ground truth of a session.
pub fn generate_session(kind: ScanKind, params: &PhantomParams) -> Result<(Vec<Message>, GroundTruth), SimError> {
    let s = Session::new(kind, params.clone())?;
    Ok((s.collect(), s.truth()))
}

const _: () = assert!(N_SECTORS == 16);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::recon_bucket;
    use crate::recon::ReconGeometry;
    use crate::stages::KSpaceBucket;
    use crate::wire::encode_message;

    fn small() -> PhantomParams {
        PhantomParams { n_slices: 3, n_phases: 4, es_phase: 2, matrix: 32, fov_mm: 192.0, n_coils: 2, ..Default::default() }
    }

    fn bytes(msgs: &[Message]) -> Vec<u8> {
        msgs.iter().flat_map(|m| encode_message(m).unwrap()).collect()
    }

    #[test]
    fn deterministic() {
        for kind in ScanKind::ALL {
            let (a, _) = generate_session(kind, &small()).unwrap();
            let (b, _) = generate_session(kind, &small()).unwrap();
            assert_eq!(bytes(&a), bytes(&b), "{kind}");
        }
        let other = PhantomParams { seed: 2, ..small() };
        let (a, _) = generate_session(ScanKind::Sax, &small()).unwrap();
        let (b, _) = generate_session(ScanKind::Sax, &other).unwrap();
        assert_ne!(bytes(&a), bytes(&b));
    }

    #[test]
    fn sax_message_count() {
        let p = PhantomParams { embed_truth: false, ..small() };
        let (msgs, _) = generate_session(ScanKind::Sax, &p).unwrap();
        assert_eq!(msgs.len(), p.n_slices * p.n_phases * p.matrix + 3);
        assert!(matches!(msgs[0], Message::ConfigName(_)));
        assert!(matches!(msgs[1], Message::SessionHeader(_)));
        assert_eq!(msgs.last(), Some(&Message::Close));
        let with_truth = Session::new(ScanKind::Sax, small()).unwrap().messages().count();
        assert_eq!(with_truth, msgs.len() + p.n_slices * p.n_phases);
    }

    #[test]
    fn truth_volumes_are_closed_form() {
        let p = PhantomParams::default();
        let t = Session::new(ScanKind::Sax, p.clone()).unwrap().truth().sax.unwrap();
        let [a, b, c] = p.ed_axes_mm;
        assert!((t.edv_ml - 4.0 / 3.0 * std::f64::consts::PI * a * b * c / 1000.0).abs() < 1e-12);
        assert!(t.ef_percent > 50.0 && t.ef_percent < 70.0);
    }

    #[test]
    fn readouts_reconstruct_phantom() {
        let p = PhantomParams { noise: 0.0, embed_truth: false, ..small() };
        let s = Session::new(ScanKind::Sax, p.clone()).unwrap();
        let readouts: Vec<KSpaceReadout> = s
            .messages()
            .filter_map(|m| match m.message {
                Message::Acquisition(r) if r.header.slice_idx == 1 => Some(r),
                _ => None,
            })
            .collect();
        let bucket = KSpaceBucket { key: 1, readouts };
        let frames = recon_bucket(&bucket, &ReconGeometry::from_session(&s.header())).unwrap();
        assert_eq!(frames.len(), p.n_phases);
        for f in &frames {
            let phase = f.header.phase_idx as usize;
            let want = p.sax_image(&p.sax_labels(1, phase));
            let got = f.pixels.to_f32();
            let err = want.iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            assert!(err < 1e-4, "phase {phase}: {err}");
            let h = s.sax_image_header(1, phase);
            assert_eq!(f.header, h);
        }
    }

    #[test]
    fn lax_pixels_map_back() {
        let s = Session::new(ScanKind::Lax, small()).unwrap();
        for view in LAX_VIEWS {
            let h = s.lax_header(view, 1);
            for (name, px) in s.lax_pixels(view, 1) {
                let back = crate::cmr::geometry::to_patient_coords(px, &h).unwrap();
                assert!((back - s.lax_points(view, 1)[&name]).norm() < 1e-9, "{name}");
            }
        }
        let t = s.truth().lax.unwrap();
        let p = small();
        let gls = 100.0 * (p.ed_axes_mm[2] - p.es_axes_mm[2]) / p.ed_axes_mm[2];
        assert!((t.views[0].gls_percent - gls).abs() < 1e-9);
    }
}
