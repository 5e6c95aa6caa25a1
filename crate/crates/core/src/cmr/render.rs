//! RGB rasters for review: image mosaics with contour overlays, bullseye
//! plots and curve plots, written as PNG.

use std::path::Path;

use crate::wire::{ImageFrame, ImageHeader};

use super::geometry::{to_patient_coords, Point3};
use super::{labels, AnalysisError, SegmentationMask};

pub type Rgb = [u8; 3];

pub const BLOOD_COLOR: Rgb = [255, 40, 40];
pub const MYO_COLOR: Rgb = [40, 220, 40];
pub const RV_COLOR: Rgb = [60, 120, 255];
pub const LINE_COLOR: Rgb = [255, 220, 0];
pub const TEXT_COLOR: Rgb = [255, 255, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self { width, height, rgb: fill.repeat(width * height) }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn put(&mut self, x: isize, y: isize, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, image::ImageError> {
        let mut out = Vec::new();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.rgb.clone())
            .expect("buffer matches dimensions");
        img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> std::io::Result<()> {
        let bytes = self.encode_png().map_err(std::io::Error::other)?;
        std::fs::write(path, bytes)
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let n = (len * 2.0).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.put((a.0 + (b.0 - a.0) * t).round() as isize, (a.1 + (b.1 - a.1) * t).round() as isize, c);
        }
    }

    /// Draw `text` with its top-left corner at `(x, y)`.
    pub fn text(&mut self, x: isize, y: isize, text: &str, scale: isize, c: Rgb) {
        for (k, ch) in text.chars().enumerate() {
            let g = glyph(ch);
            let x0 = x + k as isize * 4 * scale;
            for row in 0..5 {
                for col in 0..3 {
                    if g >> (14 - (row * 3 + col)) & 1 == 1 {
                        for dy in 0..scale {
                            for dx in 0..scale {
                                self.put(x0 + col as isize * scale + dx, y + row as isize * scale + dy, c);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3×5 glyph as 15 bits, top row first, most significant bit leftmost.
fn glyph(c: char) -> u16 {
    let rows: [&str; 5] = match c.to_ascii_uppercase() {
        '0' => ["111", "101", "101", "101", "111"],
        '1' => ["010", "110", "010", "010", "111"],
        '2' => ["111", "001", "111", "100", "111"],
        '3' => ["111", "001", "111", "001", "111"],
        '4' => ["101", "101", "111", "001", "001"],
        '5' => ["111", "100", "111", "001", "111"],
        '6' => ["111", "100", "111", "101", "111"],
        '7' => ["111", "001", "001", "010", "010"],
        '8' => ["111", "101", "111", "101", "111"],
        '9' => ["111", "101", "111", "001", "111"],
        'A' => ["010", "101", "111", "101", "101"],
        'B' => ["110", "101", "110", "101", "110"],
        'C' => ["011", "100", "100", "100", "011"],
        'D' => ["110", "101", "101", "101", "110"],
        'E' => ["111", "100", "110", "100", "111"],
        'F' => ["111", "100", "110", "100", "100"],
        'G' => ["011", "100", "101", "101", "011"],
        'H' => ["101", "101", "111", "101", "101"],
        'I' => ["111", "010", "010", "010", "111"],
        'J' => ["001", "001", "001", "101", "010"],
        'K' => ["101", "101", "110", "101", "101"],
        'L' => ["100", "100", "100", "100", "111"],
        'M' => ["101", "111", "111", "101", "101"],
        'N' => ["110", "101", "101", "101", "101"],
        'O' => ["010", "101", "101", "101", "010"],
        'P' => ["110", "101", "110", "100", "100"],
        'Q' => ["010", "101", "101", "110", "011"],
        'R' => ["110", "101", "110", "101", "101"],
        'S' => ["011", "100", "010", "001", "110"],
        'T' => ["111", "010", "010", "010", "010"],
        'U' => ["101", "101", "101", "101", "111"],
        'V' => ["101", "101", "101", "101", "010"],
        'W' => ["101", "101", "111", "111", "101"],
        'X' => ["101", "101", "010", "101", "101"],
        'Y' => ["101", "101", "010", "010", "010"],
        'Z' => ["111", "001", "010", "100", "111"],
        '.' => ["000", "000", "000", "000", "010"],
        '-' => ["000", "000", "111", "000", "000"],
        ':' => ["000", "010", "000", "010", "000"],
        '/' => ["001", "001", "010", "100", "100"],
        '%' => ["101", "001", "010", "100", "101"],
        '=' => ["000", "111", "000", "111", "000"],
        _ => ["000"; 5],
    };
    rows.iter().flat_map(|r| r.bytes()).fold(0u16, |acc, b| (acc << 1) | (b == b'1') as u16)
}

/// `(columns, rows)` of the mosaic grid for `n` tiles.
pub fn mosaic_layout(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    (cols, n.div_ceil(cols))
}

/// Labeled pixels with at least one in-image 4-neighbor of another label.
pub fn boundary_pixels(m: &SegmentationMask) -> Vec<bool> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut out = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let l = m.at(r, c);
            if l == labels::BACKGROUND {
                continue;
            }
            out[r * cols + c] = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc): &(isize, isize)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols && m.at(nr as usize, nc as usize) != l
            });
        }
    }
    out
}

fn label_color(l: u16) -> Rgb {
    match l {
        labels::LV_BLOOD => BLOOD_COLOR,
        labels::LV_MYO => MYO_COLOR,
        _ => RV_COLOR,
    }
}

/// One mosaic tile: an image, optional contours, a caption and line
/// segments in pixel coordinates `((row, col), (row, col))`.
pub struct Tile<'a> {
    pub frame: &'a ImageFrame,
    pub mask: Option<&'a SegmentationMask>,
    pub caption: String,
    pub lines: Vec<((f64, f64), (f64, f64))>,
}

pub fn render_mosaic(tiles: &[Tile]) -> Result<Raster, AnalysisError> {
    let Some(first) = tiles.first() else { return Ok(Raster::new(0, 0, [0; 3])) };
    let (h, w) = (first.frame.header.rows as usize, first.frame.header.cols as usize);
    if let Some(t) = tiles.iter().find(|t| (t.frame.header.rows as usize, t.frame.header.cols as usize) != (h, w)) {
        return Err(AnalysisError::GridMismatch(format!(
            "tile {}x{} in a {h}x{w} mosaic",
            t.frame.header.rows, t.frame.header.cols
        )));
    }
    let (gc, gr) = mosaic_layout(tiles.len());
    let mut img = Raster::new(gc * w, gr * h, [0; 3]);
    for (k, t) in tiles.iter().enumerate() {
        let (ox, oy) = ((k % gc) * w, (k / gc) * h);
        let px = t.frame.pixels.to_f32();
        let max = px.iter().cloned().fold(0.0f32, f32::max);
        for (i, v) in px.iter().enumerate() {
            let g = if max > 0.0 { (v.max(0.0) / max * 255.0).round() as u8 } else { 0 };
            img.put((ox + i % w) as isize, (oy + i / w) as isize, [g; 3]);
        }
        if let Some(m) = t.mask {
            for (i, b) in boundary_pixels(m).iter().enumerate() {
                if *b && m.rows() == h && m.cols() == w {
                    img.put((ox + i % w) as isize, (oy + i / w) as isize, label_color(m.labels[i]));
                }
            }
        }
        for &((r0, c0), (r1, c1)) in &t.lines {
            img.line((ox as f64 + c0, oy as f64 + r0), (ox as f64 + c1, oy as f64 + r1), LINE_COLOR);
        }
        if !t.caption.is_empty() {
            img.text(ox as isize + 2, oy as isize + 2, &t.caption, 1, TEXT_COLOR);
        }
    }
    Ok(img)
}

/// Segment where the plane through `point` with normal `normal` cuts the
/// image described by `h`, in pixel coordinates.
pub fn plane_intersection(h: &ImageHeader, point: &Point3, normal: &Point3) -> Result<Option<((f64, f64), (f64, f64))>, AnalysisError> {
    let f = |r: f64, c: f64| -> Result<f64, AnalysisError> { Ok((to_patient_coords((r, c), h)? - point).dot(normal)) };
    let (rmax, cmax) = (h.rows as f64 - 1.0, h.cols as f64 - 1.0);
    let corners = [(0.0, 0.0), (0.0, cmax), (rmax, cmax), (rmax, 0.0)];
    let vals = corners.iter().map(|&(r, c)| f(r, c)).collect::<Result<Vec<_>, _>>()?;
    let mut hits = Vec::new();
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        let (fa, fb) = (vals[k], vals[(k + 1) % 4]);
        if (fa <= 0.0 && fb > 0.0) || (fa > 0.0 && fb <= 0.0) {
            let t = fa / (fa - fb);
            hits.push((a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t));
        }
    }
    Ok((hits.len() >= 2).then(|| (hits[0], hits[1])))
}

fn heat(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    [(255.0 * t) as u8, (255.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8, (255.0 * (1.0 - t)) as u8]
}

/// Sixteen-sector bullseye: basal outer ring, mid ring, apical disk.
/// Sector 1 of each ring starts at 60° (apical: 45°) and numbers advance
/// counterclockwise.
pub fn render_bullseye(values: &[Option<f64>], size: usize) -> Raster {
    let mut img = Raster::new(size, size, [0; 3]);
    let finite: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let c = size as f64 / 2.0;
    let rings = [(2.0 / 3.0, 1.0, 6usize, 0usize, 60.0), (1.0 / 3.0, 2.0 / 3.0, 6, 6, 60.0), (0.0, 1.0 / 3.0, 4, 12, 45.0)];
    let sector_at = |x: f64, y: f64| -> Option<usize> {
        let rad = ((x - c).powi(2) + (y - c).powi(2)).sqrt() / c;
        let ang = (-(y - c)).atan2(x - c).to_degrees();
        rings.iter().find(|(r0, r1, ..)| rad >= *r0 && rad < *r1).map(|&(_, _, n, base, start)| {
            let w = 360.0 / n as f64;
            base + (((ang - start).rem_euclid(360.0) / w) as usize).min(n - 1)
        })
    };
    for y in 0..size {
        for x in 0..size {
            if let Some(k) = sector_at(x as f64 + 0.5, y as f64 + 0.5) {
                let color = match values.get(k).copied().flatten() {
                    Some(v) if v.is_finite() => heat((v - lo) / span),
                    _ => [60; 3],
                };
                img.put(x as isize, y as isize, color);
            }
        }
    }
    for &(r0, r1, n, base, start) in &rings {
        for k in 0..n {
            let a = (start + (k as f64 + 0.5) * 360.0 / n as f64).to_radians();
            let rad = (r0 + r1) / 2.0 * c;
            let text = values.get(base + k).copied().flatten().map_or("-".to_string(), |v| format!("{v:.2}"));
            let (x, y) = (c + rad * a.cos(), c - rad * a.sin());
            img.text(x as isize - 2 * text.len() as isize, y as isize - 2, &text, 1, TEXT_COLOR);
        }
    }
    img
}

const CURVE_COLORS: [Rgb; 4] = [[255, 80, 80], [80, 160, 255], [80, 220, 80], [240, 200, 60]];

/// Line plot of several `(x, y)` series on shared axes.
pub fn render_curves(series: &[(&[f64], &[f64])], width: usize, height: usize) -> Raster {
    let mut img = Raster::new(width, height, [0; 3]);
    let pts = series.iter().flat_map(|(x, y)| x.iter().zip(y.iter()));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        return img;
    }
    let m = 20.0;
    let (w, h) = (width as f64 - 2.0 * m, height as f64 - 2.0 * m);
    let sx = |x: f64| m + if x1 > x0 { (x - x0) / (x1 - x0) * w } else { 0.0 };
    let sy = |y: f64| m + h - if y1 > y0 { (y - y0) / (y1 - y0) * h } else { 0.0 };
    img.line((m, m + h), (m + w, m + h), [160; 3]);
    img.line((m, m), (m, m + h), [160; 3]);
    img.text(2, 2, &format!("{y1:.1}"), 1, TEXT_COLOR);
    img.text(2, (m + h) as isize + 4, &format!("{y0:.1}"), 1, TEXT_COLOR);
    img.text((m + w) as isize - 24, (m + h) as isize + 4, &format!("{x1:.0}"), 1, TEXT_COLOR);
    for (k, (xs, ys)) in series.iter().enumerate() {
        let color = CURVE_COLORS[k % CURVE_COLORS.len()];
        for i in 1..xs.len().min(ys.len()) {
            img.line((sx(xs[i - 1]), sy(ys[i - 1])), (sx(xs[i]), sy(ys[i])), color);
        }
    }
    img
}
