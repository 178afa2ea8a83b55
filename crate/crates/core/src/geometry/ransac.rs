use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{estimate_homography_dlt, residual, Correspondence, GeometryError, Homography};

/// Success probability used for the adaptive iteration bound.
pub const RANSAC_CONFIDENCE: f64 = 0.999;
const SAMPLE_SIZE: usize = 4;
const MAX_REFITS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
    /// Hypotheses actually drawn before the adaptive bound stopped the loop.
    pub iterations: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn consensus(h: &Homography, corrs: &[Correspondence], threshold: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = Vec::with_capacity(corrs.len());
    let (mut count, mut cost) = (0usize, 0.0f64);
    for c in corrs {
        let inlier = match residual(h, c) {
            Ok(r) if r <= threshold => {
                cost += r;
                true
            }
            _ => false,
        };
        count += inlier as usize;
        mask.push(inlier);
    }
    (mask, count, cost)
}

fn required_iterations(inlier_ratio: f64) -> usize {
    let w4 = inlier_ratio.powi(SAMPLE_SIZE as i32);
    if w4 >= 1.0 {
        return 0;
    }
    if w4 <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - RANSAC_CONFIDENCE).ln() / (1.0 - w4).ln();
    if n.is_finite() {
        n.ceil() as usize
    } else {
        usize::MAX
    }
}

/// Robust homography fit: 4-point hypotheses, consensus on Euclidean
/// reprojection error, then DLT refits on the consensus set until the set
/// stops changing.
///
/// The same `(corrs, threshold, max_iterations, seed)` always yields the same
/// result.
pub fn estimate_homography_ransac(
    corrs: &[Correspondence],
    inlier_threshold_px: f64,
    max_iterations: usize,
    seed: u64,
) -> Result<RansacResult, GeometryError> {
    let n = corrs.len();
    if n < SAMPLE_SIZE {
        return Err(GeometryError::TooFewPoints { needed: SAMPLE_SIZE, got: n });
    }
    if !(inlier_threshold_px > 0.0) {
        return Err(GeometryError::InvalidThreshold(inlier_threshold_px));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<bool>, usize, f64)> = None;
    let mut limit = max_iterations;
    let mut iterations = 0;
    let mut minimal = Vec::with_capacity(SAMPLE_SIZE);

    while iterations < limit {
        iterations += 1;
        minimal.clear();
        minimal.extend(sample(&mut rng, n, SAMPLE_SIZE).iter().map(|i| corrs[i]));
        let Ok(h) = estimate_homography_dlt(&minimal) else {
            continue;
        };
        let (mask, count, cost) = consensus(&h, corrs, inlier_threshold_px);
        let better = match &best {
            None => true,
            Some((_, bc, bcost)) => count > *bc || (count == *bc && cost < *bcost),
        };
        if better {
            limit = limit.min(required_iterations(count as f64 / n as f64));
            best = Some((mask, count, cost));
        }
    }

    let (mut mask, count, _) = best.ok_or(GeometryError::NoConsensus { best: 0 })?;
    if count < SAMPLE_SIZE {
        return Err(GeometryError::NoConsensus { best: count });
    }

    let mut homography = refit(corrs, &mask)?;
    for _ in 0..MAX_REFITS {
        let (next, next_count, _) = consensus(&homography, corrs, inlier_threshold_px);
        if next == mask || next_count < SAMPLE_SIZE {
            break;
        }
        match refit(corrs, &next) {
            Ok(h) => {
                homography = h;
                mask = next;
            }
            Err(_) => break,
        }
    }
    let (inliers, _, _) = consensus(&homography, corrs, inlier_threshold_px);
    let inliers = if inliers.iter().filter(|&&b| b).count() >= SAMPLE_SIZE { inliers } else { mask };
    Ok(RansacResult { homography, inliers, iterations })
}

fn refit(corrs: &[Correspondence], mask: &[bool]) -> Result<Homography, GeometryError> {
    let subset: Vec<Correspondence> =
        corrs.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect();
    estimate_homography_dlt(&subset)
}
