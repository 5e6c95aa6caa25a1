use std::sync::Arc;

use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

/// Planned centered, unitary 2D transforms for one `rows x cols` shape.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f32>>,
    row_inv: Arc<dyn Fft<f32>>,
    col_fwd: Arc<dyn Fft<f32>>,
    col_inv: Arc<dyn Fft<f32>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn forward(&self, data: &mut [Complex32]) {
        self.apply(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex32]) {
        self.apply(data, &self.row_inv, &self.col_inv);
    }

    fn apply(&self, data: &mut [Complex32], along_row: &Arc<dyn Fft<f32>>, along_col: &Arc<dyn Fft<f32>>) {
        assert_eq!(data.len(), self.rows * self.cols, "plane size does not match plan");
        for row in data.chunks_exact_mut(self.cols) {
            centered_1d(row, along_row.as_ref());
        }
        let mut column = vec![Complex32::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            centered_1d(&mut column, along_col.as_ref());
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
    }
}

// With c = N/2, the centered kernel exp(±2πi(u-c)(x-c)/N) equals the plain DFT
// kernel on indices shifted by c, so rotate in, transform, rotate back out.
fn centered_1d(line: &mut [Complex32], fft: &dyn Fft<f32>) {
    let n = line.len();
    let c = n / 2;
    line.rotate_left(c);
    fft.process(line);
    line.rotate_right(c);
    let scale = 1.0 / (n as f32).sqrt();
    line.iter_mut().for_each(|v| *v *= scale);
}

/// Centered unitary forward 2D DFT of a row-major plane.
pub fn fft2_centered(data: &mut [Complex32], rows: usize, cols: usize) {
    Fft2::new(rows, cols).forward(data);
}

/// Centered unitary inverse 2D DFT of a row-major plane.
pub fn ifft2_centered(data: &mut [Complex32], rows: usize, cols: usize) {
    Fft2::new(rows, cols).inverse(data);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    // Direct evaluation of the centered sum, in f64.
    fn naive_centered(data: &[Complex32], rows: usize, cols: usize, sign: f64) -> Vec<num_complex::Complex64> {
        let (cr, cc) = ((rows / 2) as f64, (cols / 2) as f64);
        let scale = 1.0 / ((rows * cols) as f64).sqrt();
        let mut out = vec![num_complex::Complex64::new(0.0, 0.0); rows * cols];
        for u in 0..rows {
            for v in 0..cols {
                let mut acc = num_complex::Complex64::new(0.0, 0.0);
                for x in 0..rows {
                    for y in 0..cols {
                        let phase = sign
                            * 2.0
                            * PI
                            * ((u as f64 - cr) * (x as f64 - cr) / rows as f64 + (v as f64 - cc) * (y as f64 - cc) / cols as f64);
                        let d = data[x * cols + y];
                        acc += num_complex::Complex64::new(d.re as f64, d.im as f64) * num_complex::Complex64::from_polar(1.0, phase);
                    }
                }
                out[u * cols + v] = acc * scale;
            }
        }
        out
    }

    fn plane(seed: u64, n: usize) -> Vec<Complex32> {
        (0..n)
            .map(|i| {
                let t = (i as u64 ^ seed) as f32;
                Complex32::new((t * 0.37).sin(), (t * 1.3).cos() * 0.5)
            })
            .collect()
    }

    fn rms_rel(a: &[Complex32], b: &[Complex32]) -> f64 {
        let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr() as f64).sum();
        let base: f64 = b.iter().map(|y| y.norm_sqr() as f64).sum();
        (err / base).sqrt()
    }

    #[test]
    fn matches_direct_sum() {
        for (rows, cols) in [(4, 4), (6, 8), (5, 7), (8, 3)] {
            let x = plane(rows as u64 * 31 + cols as u64, rows * cols);
            for (sign, inverse) in [(-1.0, false), (1.0, true)] {
                let mut y = x.clone();
                let f = Fft2::new(rows, cols);
                if inverse {
                    f.inverse(&mut y)
                } else {
                    f.forward(&mut y)
                }
                let want = naive_centered(&x, rows, cols, sign);
                for (g, w) in y.iter().zip(&want) {
                    assert!((g.re as f64 - w.re).abs() < 1e-5 && (g.im as f64 - w.im).abs() < 1e-5, "{rows}x{cols}: {g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn phantom_round_trip() {
        let (rows, cols) = (64, 48);
        let x: Vec<Complex32> = (0..rows * cols)
            .map(|i| {
                let (r, c) = ((i / cols) as f32 - 32.0, (i % cols) as f32 - 24.0);
                let inside = (r / 20.0).powi(2) + (c / 15.0).powi(2) < 1.0;
                Complex32::new(if inside { 1.0 } else { 0.1 }, 0.0)
            })
            .collect();
        let mut y = x.clone();
        fft2_centered(&mut y, rows, cols);
        ifft2_centered(&mut y, rows, cols);
        assert!(rms_rel(&y, &x) < 1e-5);
    }

    proptest! {
        #[test]
        fn energy_preserved(seed in any::<u64>(), rows in 1usize..24, cols in 1usize..24) {
            let x = plane(seed, rows * cols);
            let mut y = x.clone();
            fft2_centered(&mut y, rows, cols);
            let e = |v: &[Complex32]| v.iter().map(|c| c.norm_sqr() as f64).sum::<f64>();
            prop_assert!((e(&y) - e(&x)).abs() <= 1e-5 * e(&x));
        }

        #[test]
        fn linear(seed in any::<u64>(), a in -3.0f32..3.0, b in -3.0f32..3.0) {
            let (rows, cols) = (8, 12);
            let (x, z) = (plane(seed, rows * cols), plane(seed.wrapping_add(1), rows * cols));
            let mut mix: Vec<Complex32> = x.iter().zip(&z).map(|(p, q)| p * a + q * b).collect();
            let (mut fx, mut fz) = (x, z);
            let f = Fft2::new(rows, cols);
            f.forward(&mut fx);
            f.forward(&mut fz);
            f.forward(&mut mix);
            for ((m, p), q) in mix.iter().zip(&fx).zip(&fz) {
                prop_assert!((m - (p * a + q * b)).norm() < 1e-4);
            }
        }
    }
}
