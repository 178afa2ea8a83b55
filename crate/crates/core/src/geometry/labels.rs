use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{GeometryError, Homography};

/// Axis-aligned box label, `(x, y)` the top-left corner in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub frame_id: u32,
    #[serde(rename = "class")]
    pub class_name: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl BoundingBox {
    pub fn new(frame_id: u32, class_name: impl Into<String>, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { frame_id, class_name: class_name.into(), x, y, w, h, score: None }
    }

    pub fn corners(&self) -> [Point2<f64>; 4] {
        [
            Point2::new(self.x, self.y),
            Point2::new(self.x + self.w, self.y),
            Point2::new(self.x + self.w, self.y + self.h),
            Point2::new(self.x, self.y + self.h),
        ]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.score.map_or(true, |s| (0.0..=1.0).contains(&s))
    }

    /// Smallest box containing all `points`; `None` when empty.
    pub fn hull_of(
        frame_id: u32,
        class_name: impl Into<String>,
        points: impl IntoIterator<Item = Point2<f64>>,
    ) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for p in it {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Some(Self::new(frame_id, class_name, x0, y0, x1 - x0, y1 - y0))
    }
}

/// Projects the four corners and returns their axis-aligned hull.
pub fn warp_box(h: &Homography, b: &BoundingBox) -> Result<BoundingBox, GeometryError> {
    let corners = b.corners().map(|c| h.project(c));
    let mut pts = Vec::with_capacity(4);
    for c in corners {
        pts.push(c?);
    }
    let mut out = BoundingBox::hull_of(b.frame_id, b.class_name.clone(), pts).expect("four corners");
    out.score = b.score;
    Ok(out)
}

pub fn transfer_labels(h: &Homography, labels: &[BoundingBox]) -> Result<Vec<BoundingBox>, GeometryError> {
    labels.iter().map(|b| warp_box(h, b)).collect()
}

/// Intersection over union of two boxes; 0 when both are empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LabelFileError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("label {index} has non-positive size or score outside [0,1]")]
    Invalid { index: usize },
}

/// Reads a labels JSON array and checks box invariants.
pub fn read_labels(path: &Path) -> Result<Vec<BoundingBox>, LabelFileError> {
    let labels: Vec<BoundingBox> = serde_json::from_slice(&std::fs::read(path)?)?;
    if let Some(index) = labels.iter().position(|b| !b.is_valid()) {
        return Err(LabelFileError::Invalid { index });
    }
    Ok(labels)
}
