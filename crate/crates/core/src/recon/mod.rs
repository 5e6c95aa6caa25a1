//! Fully sampled Cartesian reconstruction: centered unitary inverse 2D DFT per
//! coil and phase, combined by root-sum-of-squares.
//!
//! Conventions, fixed so reconstructed images are portable:
//! - k-space center sits at index `N / 2` (integer division) on both axes,
//!   and so does the image center;
//! - both directions are scaled by `1 / sqrt(N)` per axis (unitary);
//! - image rows follow the phase-encode lines, columns the readout samples.

mod fft;

pub use fft::{fft2_centered, ifft2_centered, Fft2};

use std::collections::BTreeMap;

use log::warn;
use num_complex::Complex32;
use thiserror::Error;

use crate::stages::KSpaceBucket;
use crate::wire::{meta::keys, ImageFrame, ImageHeader, KSpaceReadout, Meta, Pixels, HEADER_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconError {
    #[error("slice {slice}: k-space incomplete, missing (phase, kline) cells {missing:?}")]
    Incomplete { slice: u16, missing: Vec<(usize, usize)> },
    #[error("empty k-space grid")]
    Empty,
    #[error("slice {slice}: inconsistent readout shape ({detail})")]
    Shape { slice: u16, detail: String },
    #[error("probability planes have mismatched sizes ({0} vs {1})")]
    PlaneMismatch(usize, usize),
}

/// Geometry taken from the session header when building image headers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconGeometry {
    /// Field of view along the readout; `None` means 1 mm per sample.
    pub fov_read_mm: Option<f32>,
    pub fov_phase_mm: Option<f32>,
    pub slice_thickness_mm: f32,
    pub slice_spacing_mm: f32,
}

impl Default for ReconGeometry {
    fn default() -> Self {
        Self { fov_read_mm: None, fov_phase_mm: None, slice_thickness_mm: 8.0, slice_spacing_mm: 10.0 }
    }
}

impl ReconGeometry {
    pub fn from_session(session: &Meta) -> Self {
        let d = Self::default();
        let thickness = session
            .get_f64(keys::SLICE_THICKNESS)
            .map_or(d.slice_thickness_mm, |v| v as f32);
        let spacing = session
            .get_f64(keys::SLICE_SPACING)
            .map_or(thickness.max(d.slice_spacing_mm), |v| v as f32);
        Self {
            fov_read_mm: session.get_f64(keys::FOV_READ).map(|v| v as f32),
            fov_phase_mm: session.get_f64(keys::FOV_PHASE).map(|v| v as f32),
            slice_thickness_mm: thickness,
            slice_spacing_mm: spacing.max(thickness),
        }
    }
}

/// Readouts of one slice laid out as `[coil][phase][kline][sample]`.
#[derive(Debug, Clone)]
pub struct KGrid {
    pub coils: usize,
    pub phases: usize,
    pub klines: usize,
    pub samples: usize,
    pub data: Vec<Complex32>,
    filled: Vec<bool>,
    /// Cells written more than once (last write wins).
    pub duplicates: usize,
}

impl KGrid {
    pub fn assemble(slice: u16, readouts: &[&KSpaceReadout]) -> Result<Self, ReconError> {
        let first = readouts.first().ok_or(ReconError::Empty)?;
        let coils = first.header.num_coils as usize;
        let samples = first.header.num_samples as usize;
        let mut phases = 0;
        let mut klines = 0;
        for r in readouts {
            if r.header.num_coils as usize != coils || r.header.num_samples as usize != samples {
                return Err(ReconError::Shape {
                    slice,
                    detail: format!(
                        "{}x{} vs {}x{}",
                        r.header.num_coils, r.header.num_samples, coils, samples
                    ),
                });
            }
            phases = phases.max(r.header.phase_idx as usize + 1);
            klines = klines.max(r.header.kline_idx as usize + 1);
        }
        let plane = klines * samples;
        let mut grid = KGrid {
            coils,
            phases,
            klines,
            samples,
            data: vec![Complex32::new(0.0, 0.0); coils * phases * plane],
            filled: vec![false; phases * klines],
            duplicates: 0,
        };
        for r in readouts {
            let (p, k) = (r.header.phase_idx as usize, r.header.kline_idx as usize);
            let cell = p * klines + k;
            if grid.filled[cell] {
                grid.duplicates += 1;
            }
            grid.filled[cell] = true;
            for c in 0..coils {
                let at = (c * phases + p) * plane + k * samples;
                grid.data[at..at + samples].copy_from_slice(r.coil(c));
            }
        }
        if grid.duplicates > 0 {
            warn!("slice {slice}: {} duplicate k-space cells, last write kept", grid.duplicates);
        }
        Ok(grid)
    }

    pub fn missing(&self) -> Vec<(usize, usize)> {
        self.filled
            .iter()
            .enumerate()
            .filter(|(_, f)| !**f)
            .map(|(i, _)| (i / self.klines, i % self.klines))
            .collect()
    }

    /// k-space plane of one coil and phase, row-major `[kline][sample]`.
    pub fn plane(&self, coil: usize, phase: usize) -> &[Complex32] {
        let n = self.klines * self.samples;
        let at = (coil * self.phases + phase) * n;
        &self.data[at..at + n]
    }
}

/// Root-sum-of-squares magnitude of per-coil inverse transforms.
pub fn rss_image(fft: &Fft2, coil_planes: &[&[Complex32]]) -> Vec<f32> {
    let mut acc = vec![0.0f32; fft.rows() * fft.cols()];
    let mut scratch = Vec::new();
    for plane in coil_planes {
        scratch.clear();
        scratch.extend_from_slice(plane);
        fft.inverse(&mut scratch);
        for (a, v) in acc.iter_mut().zip(&scratch) {
            *a += v.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|a| *a = a.sqrt());
    acc
}

/// Reconstruct every (slice, phase) in a bucket into a magnitude frame.
pub fn recon_bucket(bucket: &KSpaceBucket, geometry: &ReconGeometry) -> Result<Vec<ImageFrame>, ReconError> {
    if bucket.is_empty() {
        return Err(ReconError::Empty);
    }
    let mut slices: BTreeMap<u16, Vec<&KSpaceReadout>> = BTreeMap::new();
    for r in &bucket.readouts {
        slices.entry(r.header.slice_idx).or_default().push(r);
    }
    let mut frames = Vec::new();
    for (slice, readouts) in slices {
        let grid = KGrid::assemble(slice, &readouts)?;
        let missing = grid.missing();
        if !missing.is_empty() {
            return Err(ReconError::Incomplete { slice, missing });
        }
        if grid.klines == 0 || grid.samples == 0 {
            return Err(ReconError::Empty);
        }
        let fft = Fft2::new(grid.klines, grid.samples);
        for phase in 0..grid.phases {
            let planes: Vec<&[Complex32]> = (0..grid.coils).map(|c| grid.plane(c, phase)).collect();
            let pixels = rss_image(&fft, &planes);
            let first = readouts
                .iter()
                .find(|r| r.header.phase_idx as usize == phase)
                .expect("filled phase has a readout");
            frames.push(ImageFrame {
                header: image_header(first, &grid, geometry),
                meta: Meta::new().with("role", "recon"),
                pixels: Pixels::Magnitude(pixels),
            });
        }
    }
    Ok(frames)
}

fn image_header(r: &KSpaceReadout, grid: &KGrid, geometry: &ReconGeometry) -> ImageHeader {
    let h = &r.header;
    let rows = grid.klines;
    let cols = grid.samples;
    let spacing_row = geometry.fov_phase_mm.map_or(1.0, |f| f / rows as f32);
    let spacing_col = geometry.fov_read_mm.map_or(1.0, |f| f / cols as f32);
    // readout position is the slice center; the header wants pixel (0, 0)
    let mut position = h.position_mm;
    for i in 0..3 {
        position[i] -= (rows / 2) as f32 * spacing_row * h.phase_dir[i]
            + (cols / 2) as f32 * spacing_col * h.read_dir[i];
    }
    ImageHeader {
        version: HEADER_VERSION,
        flags: 0,
        series_idx: 0,
        slice_idx: h.slice_idx,
        phase_idx: h.phase_idx,
        rows: rows as u16,
        cols: cols as u16,
        pixel_spacing_mm: [spacing_row, spacing_col],
        slice_thickness_mm: geometry.slice_thickness_mm,
        slice_spacing_mm: geometry.slice_spacing_mm,
        trigger_time_ms: h.sample_time_ns as f32 / 1.0e6,
        position_mm: position,
        row_dir: h.phase_dir,
        col_dir: h.read_dir,
    }
}

/// Per-pixel argmax over class probability planes. Pixels whose best
/// probability is below `threshold` become background (0). Ties go to the
/// lower class index.
pub fn label_from_probability(planes: &[Vec<f32>], threshold: f32) -> Result<Vec<u16>, ReconError> {
    let Some(first) = planes.first() else {
        return Ok(Vec::new());
    };
    if let Some(p) = planes.iter().find(|p| p.len() != first.len()) {
        return Err(ReconError::PlaneMismatch(first.len(), p.len()));
    }
    Ok((0..first.len())
        .map(|i| {
            let (best, prob) = planes
                .iter()
                .enumerate()
                .fold((0usize, f32::NEG_INFINITY), |(bi, bp), (c, p)| {
                    if p[i] > bp {
                        (c, p[i])
                    } else {
                        (bi, bp)
                    }
                });
            if prob < threshold {
                0
            } else {
                best as u16
            }
        })
        .collect())
}
