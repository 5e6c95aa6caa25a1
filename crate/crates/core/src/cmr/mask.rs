use crate::wire::{ImageFrame, ImageHeader, Meta, Pixels};

use super::AnalysisError;

/// Label codes of a segmentation mask.
pub mod labels {
    pub const BACKGROUND: u16 = 0;
    pub const LV_BLOOD: u16 = 1;
    pub const LV_MYO: u16 = 2;
    pub const RV_BLOOD: u16 = 3;
}

/// Label image with the geometry of the frame it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    pub header: ImageHeader,
    pub labels: Vec<u16>,
}

impl SegmentationMask {
    pub fn new(header: ImageHeader, labels: Vec<u16>) -> Result<Self, AnalysisError> {
        if labels.len() != header.pixel_count() {
            return Err(AnalysisError::GridMismatch(format!(
                "{} labels for {}x{} grid",
                labels.len(),
                header.rows,
                header.cols
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l > labels::RV_BLOOD) {
            return Err(AnalysisError::BadLabel(*bad));
        }
        Ok(Self { header, labels })
    }

    pub fn rows(&self) -> usize {
        self.header.rows as usize
    }

    pub fn cols(&self) -> usize {
        self.header.cols as usize
    }

    pub fn at(&self, r: usize, c: usize) -> u16 {
        self.labels[r * self.cols() + c]
    }

    /// Label at signed coordinates; outside the image is background.
    pub fn get(&self, r: isize, c: isize) -> u16 {
        if r < 0 || c < 0 || r as usize >= self.rows() || c as usize >= self.cols() {
            labels::BACKGROUND
        } else {
            self.at(r as usize, c as usize)
        }
    }

    pub fn count(&self, label: u16) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Mean (row, col) of the pixels carrying `label`.
    pub fn centroid(&self, label: u16) -> Option<(f64, f64)> {
        let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
        for (i, l) in self.labels.iter().enumerate() {
            if *l == label {
                sr += (i / self.cols()) as f64;
                sc += (i % self.cols()) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (sr / n as f64, sc / n as f64))
    }

    /// Pixel area in mm².
    pub fn pixel_area_mm2(&self) -> f64 {
        self.header.pixel_spacing_mm[0] as f64 * self.header.pixel_spacing_mm[1] as f64
    }

    /// Label frame carrying this mask on the wire.
    pub fn to_frame(&self, meta: Meta) -> ImageFrame {
        ImageFrame { header: self.header, meta, pixels: Pixels::Label(self.labels.clone()) }
    }

    pub fn from_frame(frame: &ImageFrame) -> Result<Self, AnalysisError> {
        match &frame.pixels {
            Pixels::Label(l) => Self::new(frame.header, l.clone()),
            _ => Err(AnalysisError::GridMismatch("frame does not carry labels".into())),
        }
    }
}

/// Run-length text encoding of a label image: `v*n,v*n,...` in row-major order.
pub fn rle_encode(labels: &[u16]) -> String {
    let mut out = String::new();
    let mut iter = labels.iter().peekable();
    while let Some(&v) = iter.next() {
        let mut n = 1;
        while iter.peek() == Some(&&v) {
            iter.next();
            n += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str(&format!("{v}*{n}"));
    }
    out
}

pub fn rle_decode(text: &str, expected_len: usize) -> Result<Vec<u16>, AnalysisError> {
    let mut out = Vec::with_capacity(expected_len);
    for run in text.split(',').filter(|s| !s.is_empty()) {
        let bad = || AnalysisError::Other(format!("bad mask run {run:?}"));
        let (v, n) = run.split_once('*').ok_or_else(bad)?;
        let v: u16 = v.parse().map_err(|_| bad())?;
        let n: usize = n.parse().map_err(|_| bad())?;
        out.extend(std::iter::repeat_n(v, n));
    }
    if out.len() != expected_len {
        return Err(AnalysisError::GridMismatch(format!(
            "mask run length {} for {} pixels",
            out.len(),
            expected_len
        )));
    }
    Ok(out)
}
