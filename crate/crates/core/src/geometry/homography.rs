use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Correspondence, GeometryError};

const INFINITY_EPS: f64 = 1e-12;
/// Relative gap below which the second-smallest singular value of the design
/// matrix counts as zero, i.e. the solution is not unique.
const RANK_EPS: f64 = 1e-10;
/// Twice the triangle area (normalised coordinates) treated as collinear.
const COLLINEAR_EPS: f64 = 1e-8;

/// Planar projective map `x' ~ H x`, stored normalised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m`, scaling so `h33 = 1` when possible, else to unit Frobenius norm.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::DegenerateConfiguration);
        }
        let scaled = if m[(2, 2)].abs() > INFINITY_EPS {
            m / m[(2, 2)]
        } else {
            let n = m.norm();
            if n == 0.0 {
                return Err(GeometryError::DegenerateConfiguration);
            }
            m / n
        };
        // Invertibility relative to the matrix scale.
        if scaled.determinant().abs() <= 1e-12 * scaled.norm().powi(3) {
            return Err(GeometryError::Singular);
        }
        Ok(Self(scaled))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn inverse(&self) -> Self {
        let inv = self.0.try_inverse().expect("homography invariant guarantees invertibility");
        Self::from_matrix(inv).expect("inverse of an invertible matrix is invertible")
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_matrix(self.0 * other.0)
    }

    pub fn project(&self, p: Point2<f64>) -> Result<Point2<f64>, GeometryError> {
        project_matrix(&self.0, p)
    }
}

/// Projects through an arbitrary (unnormalised) 3×3 matrix.
pub fn project_matrix(m: &Matrix3<f64>, p: Point2<f64>) -> Result<Point2<f64>, GeometryError> {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    if v.z.abs() <= INFINITY_EPS || !v.z.is_finite() {
        return Err(GeometryError::PointAtInfinity);
    }
    Ok(Point2::new(v.x / v.z, v.y / v.z))
}

#[derive(Serialize, Deserialize)]
struct HomographyJson {
    h: [[f64; 3]; 3],
}

impl Serialize for Homography {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        HomographyJson { h: self.rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = HomographyJson::deserialize(d)?;
        Homography::from_rows(j.h).map_err(serde::de::Error::custom)
    }
}

/// Hartley normalisation: centroid to origin, mean distance √2.
fn normalize(points: impl Iterator<Item = Point2<f64>> + Clone) -> Option<(Vec<Point2<f64>>, Matrix3<f64>)> {
    let pts: Vec<Point2<f64>> = points.collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = pts.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if !(mean_dist > 1e-12) || !mean_dist.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = pts.iter().map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy))).collect();
    Some((out, t))
}

fn has_collinear_triple(pts: &[Point2<f64>]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if cross.abs() < COLLINEAR_EPS {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalised DLT over all correspondences.
pub fn estimate_homography_dlt(corrs: &[Correspondence]) -> Result<Homography, GeometryError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeometryError::TooFewPoints { needed: 4, got: n });
    }
    let (src, t_src) = normalize(corrs.iter().map(|c| c.src)).ok_or(GeometryError::DegenerateConfiguration)?;
    let (dst, t_dst) = normalize(corrs.iter().map(|c| c.dst)).ok_or(GeometryError::DegenerateConfiguration)?;
    if n == 4 && (has_collinear_triple(&src) || has_collinear_triple(&dst)) {
        return Err(GeometryError::DegenerateConfiguration);
    }

    // Pad to at least 9 rows so the SVD yields the full right singular basis.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in src.iter().zip(&dst).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(GeometryError::DegenerateConfiguration)?;
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smallest = order[0];
    let second = sv[order[1]];
    let largest = sv[order[sv.len() - 1]];
    if second <= RANK_EPS * largest {
        return Err(GeometryError::DegenerateConfiguration);
    }

    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::DegenerateConfiguration)?;
    Homography::from_matrix(t_dst_inv * hn * t_src).map_err(|_| GeometryError::DegenerateConfiguration)
}
