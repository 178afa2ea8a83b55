use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::GeometryError;

pub const UNDISTORT_MAX_ITERATIONS: usize = 20;
const UNDISTORT_TOLERANCE: f64 = 1e-12;

/// Pinhole intrinsics with radial-tangential (k1, k2, p1, p2) distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl DistortionModel {
    fn validate(&self) -> Result<(), GeometryError> {
        if self.fx > 0.0 && self.fy > 0.0 {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics)
        }
    }

    /// Forward model on normalised coordinates.
    fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }
}

/// Applies lens distortion to an ideal pixel.
pub fn distort_point(model: &DistortionModel, p: Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    model.validate()?;
    let (x, y) = ((p.x - model.cx) / model.fx, (p.y - model.cy) / model.fy);
    let (xd, yd) = model.distort_normalized(x, y);
    Ok(Point2::new(xd * model.fx + model.cx, yd * model.fy + model.cy))
}

/// Inverts [`distort_point`] by fixed-point iteration in normalised
/// coordinates.
pub fn undistort_point(model: &DistortionModel, p: Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    model.validate()?;
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(GeometryError::NoConvergence);
    }
    let (xd, yd) = ((p.x - model.cx) / model.fx, (p.y - model.cy) / model.fy);
    let (mut x, mut y) = (xd, yd);
    for _ in 0..UNDISTORT_MAX_ITERATIONS {
        let r2 = x * x + y * y;
        let radial = 1.0 + model.k1 * r2 + model.k2 * r2 * r2;
        let tx = 2.0 * model.p1 * x * y + model.p2 * (r2 + 2.0 * x * x);
        let ty = model.p1 * (r2 + 2.0 * y * y) + 2.0 * model.p2 * x * y;
        let (nx, ny) = ((xd - tx) / radial, (yd - ty) / radial);
        if !(nx.is_finite() && ny.is_finite()) {
            return Err(GeometryError::NoConvergence);
        }
        let delta = (nx - x).abs().max((ny - y).abs());
        x = nx;
        y = ny;
        if delta < UNDISTORT_TOLERANCE {
            return Ok(Point2::new(x * model.fx + model.cx, y * model.fy + model.cy));
        }
    }
    Err(GeometryError::NoConvergence)
}
