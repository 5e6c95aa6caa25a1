//! Perfusion analysis: RV insertion, 16-sector split, endo/epi layers,
//! sector statistics, perfusion reserve and AIF transit time.
//!
//! Angles are in degrees about the LV blood centroid with
//! `atan2(-(row - r0), col - c0)`, increasing counterclockwise on screen.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{labels, AnalysisError, SegmentationMask};

pub const N_SECTORS: usize = 16;
/// Rest sector means below this (mL/min/g) give no reserve value.
pub const MPR_REST_GUARD: f64 = 0.05;
pub const MIN_AIF_FRAMES: usize = 8;
const BASELINE_FRAMES: usize = 3;
const RISE_FRACTION: f64 = 0.2;
const FALL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceClass {
    Basal,
    Mid,
    Apical,
}

impl SliceClass {
    pub const ALL: [SliceClass; 3] = [SliceClass::Basal, SliceClass::Mid, SliceClass::Apical];

    pub fn sector_count(self) -> u16 {
        match self {
            SliceClass::Apical => 4,
            _ => 6,
        }
    }

    pub fn sector_base(self) -> u16 {
        match self {
            SliceClass::Basal => 0,
            SliceClass::Mid => 6,
            SliceClass::Apical => 12,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SliceClass::Basal => "basal",
            SliceClass::Mid => "mid",
            SliceClass::Apical => "apical",
        }
    }
}

impl FromStr for SliceClass {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basal" => Ok(SliceClass::Basal),
            "mid" => Ok(SliceClass::Mid),
            "apical" => Ok(SliceClass::Apical),
            _ => Err(AnalysisError::Other(format!("unknown slice class {s:?}"))),
        }
    }
}

/// Direction in which sector numbers advance from the insertion point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rotation {
    #[default]
    Ccw,
    Cw,
}

impl FromStr for Rotation {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ccw" => Ok(Rotation::Ccw),
            "cw" => Ok(Rotation::Cw),
            _ => Err(AnalysisError::Other(format!("unknown rotation {s:?}"))),
        }
    }
}

/// Angle of pixel `(r, c)` about `(r0, c0)`, in [0, 360).
pub fn pixel_angle(r: f64, c: f64, r0: f64, c0: f64) -> f64 {
    (-(r - r0)).atan2(c - c0).to_degrees().rem_euclid(360.0)
}

fn neighbors8() -> impl Iterator<Item = (isize, isize)> {
    (-1..=1).flat_map(|dr| (-1..=1).map(move |dc| (dr, dc))).filter(|&d| d != (0, 0))
}

const NEIGHBORS4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn pixels(m: &SegmentationMask) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..m.rows()).flat_map(move |r| (0..m.cols()).map(move |c| (r, c)))
}

/// The counterclockwise end of the arc of myocardium pixels touching the
/// RV blood pool: `((row, col), angle_deg)`.
pub fn find_rv_insertion(m: &SegmentationMask) -> Result<((usize, usize), f64), AnalysisError> {
    let (r0, c0) = m.centroid(labels::LV_BLOOD).ok_or(AnalysisError::NoBloodPool)?;
    let mut cand: Vec<(f64, (usize, usize))> = pixels(m)
        .filter(|&(r, c)| m.at(r, c) == labels::LV_MYO)
        .filter(|&(r, c)| neighbors8().any(|(dr, dc)| m.get(r as isize + dr, c as isize + dc) == labels::RV_BLOOD))
        .map(|(r, c)| (pixel_angle(r as f64, c as f64, r0, c0), (r, c)))
        .collect();
    if cand.is_empty() {
        return Err(AnalysisError::RvNotAdjacent);
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the arc ends just before the widest angular gap
    let n = cand.len();
    let end = (0..n)
        .max_by(|&i, &j| {
            let gap = |k: usize| (cand[(k + 1) % n].0 - cand[k].0).rem_euclid(360.0) + if n == 1 { 360.0 } else { 0.0 };
            gap(i).total_cmp(&gap(j)).then(j.cmp(&i))
        })
        .expect("non-empty");
    Ok((cand[end].1, cand[end].0))
}

/// Per-pixel sector ids (0 outside the myocardium) and layer codes.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMap {
    pub rows: usize,
    pub cols: usize,
    pub sectors: Vec<u16>,
}

pub mod layer {
    pub const NONE: u8 = 0;
    pub const ENDO: u8 = 1;
    pub const EPI: u8 = 2;
}

/// Assign each myocardium pixel to a sector of its slice class. Sector 1 of
/// the class starts at `insertion_deg`.
pub fn split_sectors(m: &SegmentationMask, insertion_deg: f64, class: SliceClass, rotation: Rotation) -> Result<SectorMap, AnalysisError> {
    let (r0, c0) = m.centroid(labels::LV_BLOOD).ok_or(AnalysisError::NoBloodPool)?;
    let n = class.sector_count();
    let width = 360.0 / n as f64;
    let sectors = pixels(m)
        .map(|(r, c)| {
            if m.at(r, c) != labels::LV_MYO {
                return 0;
            }
            let a = pixel_angle(r as f64, c as f64, r0, c0);
            let rel = match rotation {
                Rotation::Ccw => a - insertion_deg,
                Rotation::Cw => insertion_deg - a,
            }
            .rem_euclid(360.0);
            class.sector_base() + ((rel / width) as u16).min(n - 1) + 1
        })
        .collect();
    Ok(SectorMap { rows: m.rows(), cols: m.cols(), sectors })
}

/// Squared Euclidean distance transform of a seed set (exact, separable).
pub fn squared_distance_transform(seeds: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    const FAR: f64 = 1e20;
    let mut g: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let mut line = Vec::new();
    for c in 0..cols {
        line.clear();
        line.extend((0..rows).map(|r| g[r * cols + c]));
        let d = lower_envelope(&line);
        for r in 0..rows {
            g[r * cols + c] = d[r];
        }
    }
    for r in 0..rows {
        let d = lower_envelope(&g[r * cols..(r + 1) * cols]);
        g[r * cols..(r + 1) * cols].copy_from_slice(&d);
    }
    g
}

/// 1-D squared distance via the lower envelope of parabolas.
fn lower_envelope(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
    out
}

/// Endocardial and epicardial boundary pixels: myocardium 4-adjacent to LV
/// blood, and myocardium 4-adjacent to background, RV or the image edge.
pub fn boundaries(m: &SegmentationMask) -> (Vec<bool>, Vec<bool>) {
    let mut endo = vec![false; m.labels.len()];
    let mut epi = vec![false; m.labels.len()];
    for (r, c) in pixels(m) {
        if m.at(r, c) != labels::LV_MYO {
            continue;
        }
        let i = r * m.cols() + c;
        for (dr, dc) in NEIGHBORS4 {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            let inside = nr >= 0 && nc >= 0 && (nr as usize) < m.rows() && (nc as usize) < m.cols();
            match m.get(nr, nc) {
                labels::LV_BLOOD => endo[i] = true,
                labels::BACKGROUND | labels::RV_BLOOD => epi[i] = true,
                _ if !inside => epi[i] = true,
                _ => {}
            }
        }
    }
    (endo, epi)
}

/// Layer of each myocardium pixel by normalized transmural depth
/// `d_endo / (d_endo + d_epi)`: endo below one half, epi otherwise.
pub fn split_endo_epi(m: &SegmentationMask) -> Result<Vec<u8>, AnalysisError> {
    let (endo, epi) = boundaries(m);
    if !endo.contains(&true) {
        return Err(AnalysisError::MissingBoundary("endocardial"));
    }
    if !epi.contains(&true) {
        return Err(AnalysisError::MissingBoundary("epicardial"));
    }
    let d_endo = squared_distance_transform(&endo, m.rows(), m.cols());
    let d_epi = squared_distance_transform(&epi, m.rows(), m.cols());
    Ok(m.labels
        .iter()
        .enumerate()
        .map(|(i, &l)| match l {
            labels::LV_MYO if d_endo[i] < d_epi[i] => layer::ENDO,
            labels::LV_MYO => layer::EPI,
            _ => layer::NONE,
        })
        .collect())
}

/// Mean flow per sector and per sector × layer; `None` for empty sectors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SectorStats {
    pub mean: Vec<Option<f64>>,
    pub endo: Vec<Option<f64>>,
    pub epi: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// Accumulates sector sums across slices.
#[derive(Debug, Clone)]
pub struct SectorAccumulator {
    sum: [[f64; 3]; N_SECTORS],
    count: [[usize; 3]; N_SECTORS],
}

impl Default for SectorAccumulator {
    fn default() -> Self {
        Self { sum: [[0.0; 3]; N_SECTORS], count: [[0; 3]; N_SECTORS] }
    }
}

impl SectorAccumulator {
    pub fn add(&mut self, flow: &[f32], sectors: &SectorMap, layers: &[u8]) -> Result<(), AnalysisError> {
        let n = sectors.rows * sectors.cols;
        if flow.len() != n || layers.len() != n || sectors.sectors.len() != n {
            return Err(AnalysisError::GridMismatch(format!(
                "flow {} / sectors {} / layers {} pixels",
                flow.len(),
                sectors.sectors.len(),
                layers.len()
            )));
        }
        for ((&f, &s), &l) in flow.iter().zip(&sectors.sectors).zip(layers) {
            if s == 0 {
                continue;
            }
            let k = s as usize - 1;
            if k >= N_SECTORS {
                return Err(AnalysisError::Other(format!("sector id {s}")));
            }
            self.sum[k][0] += f as f64;
            self.count[k][0] += 1;
            if l == layer::ENDO || l == layer::EPI {
                self.sum[k][l as usize] += f as f64;
                self.count[k][l as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> SectorStats {
        let mean = |j: usize| -> Vec<Option<f64>> {
            (0..N_SECTORS).map(|k| (self.count[k][j] > 0).then(|| self.sum[k][j] / self.count[k][j] as f64)).collect()
        };
        SectorStats { mean: mean(0), endo: mean(1), epi: mean(2), counts: self.count.iter().map(|c| c[0]).collect() }
    }
}

pub fn sector_stats(flow: &[f32], sectors: &SectorMap, layers: &[u8]) -> Result<SectorStats, AnalysisError> {
    let mut acc = SectorAccumulator::default();
    acc.add(flow, sectors, layers)?;
    Ok(acc.finish())
}

/// Stress over rest per sector; absent when either side is absent or rest is
/// below [`MPR_REST_GUARD`].
pub fn perfusion_reserve(stress: &[Option<f64>], rest: &[Option<f64>]) -> Vec<Option<f64>> {
    stress
        .iter()
        .zip(rest)
        .map(|(s, r)| match (s, r) {
            (Some(s), Some(r)) if *r >= MPR_REST_GUARD => Some(s / r),
            _ => None,
        })
        .collect()
}

/// Signal-time curve with its own time axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Curve {
    pub times_ms: Vec<f64>,
    pub values: Vec<f64>,
}

/// Mean signal over the pixels of `label` in `mask`, per frame.
pub fn extract_curve(frames: &[(f64, Vec<f32>)], mask: &SegmentationMask, label: u16) -> Result<Curve, AnalysisError> {
    let idx: Vec<usize> = mask.labels.iter().enumerate().filter(|(_, &l)| l == label).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(AnalysisError::Other(format!("no pixels of label {label} for the AIF")));
    }
    let mut c = Curve::default();
    for (t, px) in frames {
        if px.len() != mask.labels.len() {
            return Err(AnalysisError::GridMismatch(format!("AIF frame {} vs mask {} pixels", px.len(), mask.labels.len())));
        }
        c.times_ms.push(*t);
        c.values.push(idx.iter().map(|&i| px[i] as f64).sum::<f64>() / idx.len() as f64);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PttMethod {
    #[default]
    Centroid,
    Peak,
}

impl FromStr for PttMethod {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "centroid" => Ok(PttMethod::Centroid),
            "peak" => Ok(PttMethod::Peak),
            _ => Err(AnalysisError::Other(format!("unknown PTT method {s:?}"))),
        }
    }
}

/// First-pass window of a baseline-corrected curve: `(signal, start, end)`
/// with `end` exclusive.
fn first_pass(c: &Curve, which: &'static str) -> Result<(Vec<f64>, usize, usize, usize), AnalysisError> {
    if c.values.len() < MIN_AIF_FRAMES {
        return Err(AnalysisError::TooFewFrames { need: MIN_AIF_FRAMES, got: c.values.len() });
    }
    let base = c.values[..BASELINE_FRAMES].iter().sum::<f64>() / BASELINE_FRAMES as f64;
    let s: Vec<f64> = c.values.iter().map(|v| (v - base).max(0.0)).collect();
    let peak_idx = super::lax::argmax(&s);
    let peak = s[peak_idx];
    if peak <= 0.0 {
        return Err(AnalysisError::FlatCurve(which));
    }
    let start = s.iter().position(|v| *v > RISE_FRACTION * peak).unwrap_or(peak_idx);
    let end = (peak_idx + 1..s.len()).find(|&i| s[i] < FALL_FRACTION * peak).unwrap_or(s.len());
    Ok((s, start, end, peak_idx))
}

/// Temporal centroid of the first pass, in seconds.
pub fn first_pass_centroid(c: &Curve, which: &'static str) -> Result<f64, AnalysisError> {
    let (s, start, end, _) = first_pass(c, which)?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in start..end {
        num += c.times_ms[i] / 1000.0 * s[i];
        den += s[i];
    }
    Ok(num / den)
}

/// Pulmonary transit time in seconds: LV minus RV.
pub fn ptt(rv: &Curve, lv: &Curve, method: PttMethod) -> Result<f64, AnalysisError> {
    match method {
        PttMethod::Centroid => Ok(first_pass_centroid(lv, "LV")? - first_pass_centroid(rv, "RV")?),
        PttMethod::Peak => {
            let (_, _, _, p_lv) = first_pass(lv, "LV")?;
            let (_, _, _, p_rv) = first_pass(rv, "RV")?;
            Ok((lv.times_ms[p_lv] - rv.times_ms[p_rv]) / 1000.0)
        }
    }
}

/// Gamma-variate `a (t - t0)^alpha exp(-(t - t0) / beta)` for `t > t0`, else 0.
pub fn gamma_variate(t: f64, t0: f64, a: f64, alpha: f64, beta: f64) -> f64 {
    if t <= t0 {
        0.0
    } else {
        a * (t - t0).powf(alpha) * (-(t - t0) / beta).exp()
    }
}
