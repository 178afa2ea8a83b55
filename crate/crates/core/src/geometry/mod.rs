//! View alignment: homographies, reprojection statistics, lens
//! undistortion and bounding-box transfer between cameras.

mod distortion;
mod homography;
mod labels;
mod ransac;
mod warp;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distortion::{distort_point, undistort_point, DistortionModel, UNDISTORT_MAX_ITERATIONS};
pub use homography::{estimate_homography_dlt, project_matrix, Homography};
pub use labels::{iou, read_labels, transfer_labels, warp_box, BoundingBox, LabelFileError};
pub use ransac::{estimate_homography_ransac, RansacResult, RANSAC_CONFIDENCE};
pub use warp::warp_image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("matrix is singular")]
    Singular,
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("no consensus: best hypothesis had {best} inliers")]
    NoConsensus { best: usize },
    #[error("inlier threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("undistortion did not converge")]
    NoConvergence,
    #[error("invalid intrinsics: fx and fy must be positive")]
    InvalidIntrinsics,
}

/// A source/target pixel pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: Point2<f64>,
    pub dst: Point2<f64>,
}

impl Correspondence {
    pub fn new(src: Point2<f64>, dst: Point2<f64>) -> Self {
        Self { src, dst }
    }
}

pub fn warp_point(h: &Homography, p: Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    h.project(p)
}

/// Euclidean distance between `dst` and the projection of `src`.
pub fn residual(h: &Homography, c: &Correspondence) -> Result<f64, GeometryError> {
    let p = h.project(c.src)?;
    Ok(((c.dst.x - p.x).powi(2) + (c.dst.y - p.y).powi(2)).sqrt())
}

/// Reprojection residual summary.
///
/// `mean_px`/`std_px`/`max_px` describe the residual norms; `std_x_px` and
/// `std_y_px` are per-axis standard deviations of the signed error and
/// `component_std_px` pools both axes. All deviations use the population
/// (1/n) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mean_px: f64,
    pub std_px: f64,
    pub max_px: f64,
    pub std_x_px: f64,
    pub std_y_px: f64,
    pub component_std_px: f64,
    pub inliers: usize,
    pub total: usize,
}

fn population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Residual statistics over the correspondences selected by `mask` (all
/// of them when `mask` is `None`).
pub fn reprojection_stats(
    h: &Homography,
    corrs: &[Correspondence],
    mask: Option<&[bool]>,
) -> Result<CalibrationReport, GeometryError> {
    let selected: Vec<&Correspondence> = match mask {
        Some(m) => corrs.iter().zip(m).filter(|(_, &keep)| keep).map(|(c, _)| c).collect(),
        None => corrs.iter().collect(),
    };
    if selected.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let mut norms = Vec::with_capacity(selected.len());
    let mut ex = Vec::with_capacity(selected.len());
    let mut ey = Vec::with_capacity(selected.len());
    for c in &selected {
        let p = h.project(c.src)?;
        let (dx, dy) = (c.dst.x - p.x, c.dst.y - p.y);
        ex.push(dx);
        ey.push(dy);
        norms.push((dx * dx + dy * dy).sqrt());
    }
    let (mean, std) = population_std(&norms);
    let (_, std_x) = population_std(&ex);
    let (_, std_y) = population_std(&ey);
    Ok(CalibrationReport {
        mean_px: mean,
        std_px: std,
        max_px: norms.iter().copied().fold(0.0, f64::max),
        std_x_px: std_x,
        std_y_px: std_y,
        component_std_px: ((std_x * std_x + std_y * std_y) / 2.0).sqrt(),
        inliers: selected.len(),
        total: corrs.len(),
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("correspondences csv line {line}: {reason}")]
pub struct CorrespondenceCsvError {
    pub line: usize,
    pub reason: String,
}

/// Parses `src_x,src_y,dst_x,dst_y` rows; a non-numeric first line is a header.
pub fn parse_correspondences_csv(text: &str) -> Result<Vec<Correspondence>, CorrespondenceCsvError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("src_x")) {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match vals.as_deref() {
            Ok([sx, sy, dx, dy]) if [sx, sy, dx, dy].iter().all(|v| v.is_finite()) => {
                out.push(Correspondence::new(Point2::new(*sx, *sy), Point2::new(*dx, *dy)))
            }
            _ => {
                return Err(CorrespondenceCsvError {
                    line: idx + 1,
                    reason: "expected four finite numbers src_x,src_y,dst_x,dst_y".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_correspondences_csv(corrs: &[Correspondence]) -> String {
    let mut out = String::from("src_x,src_y,dst_x,dst_y\n");
    for c in corrs {
        out.push_str(&format!("{},{},{},{}\n", c.src.x, c.src.y, c.dst.x, c.dst.y));
    }
    out
}
