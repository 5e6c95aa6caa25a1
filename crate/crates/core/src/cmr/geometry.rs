//! Pixel/patient coordinate conversions.

use nalgebra::Vector3;

use crate::wire::ImageHeader;

use super::AnalysisError;

pub type Point3 = Vector3<f64>;

const UNIT_TOL: f64 = 1e-3;

fn vec3(v: [f32; 3]) -> Point3 {
    Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64)
}

fn unit(name: &'static str, v: [f32; 3]) -> Result<Point3, AnalysisError> {
    let v = vec3(v);
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(AnalysisError::NonUnitDirection(name));
    }
    Ok(v)
}

/// Patient position (mm) of a fractional pixel coordinate `(row, col)`.
pub fn to_patient_coords(p: (f64, f64), h: &ImageHeader) -> Result<Point3, AnalysisError> {
    let row_dir = unit("row_dir", h.row_dir)?;
    let col_dir = unit("col_dir", h.col_dir)?;
    Ok(vec3(h.position_mm)
        + row_dir * (p.0 * h.pixel_spacing_mm[0] as f64)
        + col_dir * (p.1 * h.pixel_spacing_mm[1] as f64))
}

/// Fractional pixel coordinate of the projection of `x` onto the image plane.
pub fn to_pixel_coords(x: &Point3, h: &ImageHeader) -> (f64, f64) {
    let d = x - vec3(h.position_mm);
    (
        d.dot(&vec3(h.row_dir)) / h.pixel_spacing_mm[0] as f64,
        d.dot(&vec3(h.col_dir)) / h.pixel_spacing_mm[1] as f64,
    )
}

/// Patient position of the center pixel `(rows/2, cols/2)`.
pub fn slice_center(h: &ImageHeader) -> Result<Point3, AnalysisError> {
    to_patient_coords(((h.rows / 2) as f64, (h.cols / 2) as f64), h)
}

pub fn slice_normal(h: &ImageHeader) -> Point3 {
    vec3(h.row_dir).cross(&vec3(h.col_dir)).normalize()
}
