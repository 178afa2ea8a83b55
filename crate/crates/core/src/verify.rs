//! Alignment check between two views: Canny edge maps compared by
//! zero-mean normalised cross-correlation (ZNCC).
//!
//! The reported deviation is the Euclidean length of the best-matching
//! displacement of the central crop of view A inside view B.

use std::collections::VecDeque;

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_io::FloatImage;

pub const DEFAULT_CANNY_SIGMA: f64 = 1.4;
pub const DEFAULT_LOW_FRAC: f64 = 0.1;
pub const DEFAULT_HIGH_FRAC: f64 = 0.3;
pub const DEFAULT_SEARCH_RADIUS: usize = 16;
pub const DEFAULT_MARGIN: usize = 32;
/// Blur applied to binary edge maps before correlation.
pub const EDGE_SMOOTHING_SIGMA: f64 = 1.0;

/// Relative variance below which a patch counts as constant.
const VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("patch has zero variance")]
    ZeroVariance,
    #[error("template {tw}x{th} at offset ({dx},{dy}) does not fit in {iw}x{ih} image")]
    TemplateOutOfBounds { tw: usize, th: usize, dx: isize, dy: isize, iw: usize, ih: usize },
    #[error("images differ in size: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("margin {margin} must be at least the search radius {radius}")]
    MarginTooSmall { margin: usize, radius: usize },
    #[error("margin {margin} leaves no template in a {width}x{height} image")]
    EmptyTemplate { margin: usize, width: usize, height: usize },
    #[error("every offset has a constant patch")]
    AllOffsetsUnusable,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Binary edge image, one byte per pixel holding 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl EdgeMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_gray(&self) -> GrayImage {
        let raw = self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer length matches")
    }

    /// Any non-zero pixel is an edge.
    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Self { width: w as usize, height: h as usize, data: img.as_raw().iter().map(|&v| (v != 0) as u8).collect() }
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage { width: self.width, height: self.height, data: self.data.iter().map(|&v| v as f64).collect() }
    }
}

/// Symmetric reflection (`cba|abc|cba`) of an index into `0..n`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Sampled Gaussian, radius `ceil(3 sigma)`, normalised to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with reflected borders, in floating point.
pub fn gaussian_blur_float(img: &FloatImage, sigma: f64) -> FloatImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    if w == 0 || h == 0 {
        return img.clone();
    }
    let mut tmp = FloatImage::new(w, h);
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * row[reflect(x as isize + j as isize - r, w)];
            }
            tmp.data[y * w + x] = acc;
        }
    }
    let mut out = FloatImage::new(w, h);
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let sy = reflect(y as isize + j as isize - r, h);
            let src = &tmp.data[sy * w..(sy + 1) * w];
            let dst = &mut out.data[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Gaussian blur of an 8-bit image; results are rounded back to 8 bits.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, VerifyError> {
    if !(sigma > 0.0) {
        return Err(VerifyError::InvalidParameter("sigma must be positive"));
    }
    Ok(gaussian_blur_float(&FloatImage::from_gray(img), sigma).to_gray())
}

const TAN_22_5: f64 = 0.414_213_562_373_095_1;
const TAN_67_5: f64 = 2.414_213_562_373_095;

/// Canny edge detector.
///
/// Blur, 3×3 Sobel, non-maximum suppression along the gradient direction
/// quantised to 4 bins, double threshold relative to the maximum gradient
/// magnitude, 8-connected hysteresis from strong pixels.
pub fn canny(img: &GrayImage, sigma: f64, low_frac: f64, high_frac: f64) -> Result<EdgeMap, VerifyError> {
    if !(sigma > 0.0) {
        return Err(VerifyError::InvalidParameter("sigma must be positive"));
    }
    if !(0.0 < low_frac && low_frac < high_frac && high_frac <= 1.0) {
        return Err(VerifyError::InvalidParameter("need 0 < low_frac < high_frac <= 1"));
    }
    // Centring on 127.5 makes inversion an exact sign flip in floating point.
    let mut f = FloatImage::from_gray(img);
    f.data.iter_mut().for_each(|v| *v -= 127.5);
    Ok(canny_float(&gaussian_blur_float(&f, sigma), low_frac, high_frac))
}

fn canny_float(img: &FloatImage, low_frac: f64, high_frac: f64) -> EdgeMap {
    let (w, h) = (img.width, img.height);
    let mut edges = EdgeMap { width: w, height: h, data: vec![0; w * h] };
    if w < 3 || h < 3 {
        return edges;
    }
    let px = |x: isize, y: isize| img.data[reflect(y, h) * w + reflect(x, w)];

    let mut mag = vec![0.0f64; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let (ax, ay) = (gx.abs(), gy.abs());
            dir[i] = if ay <= ax * TAN_22_5 {
                0
            } else if ay >= ax * TAN_67_5 {
                2
            } else if (gx > 0.0) == (gy > 0.0) {
                1
            } else {
                3
            };
        }
    }

    let max_mag = mag.iter().copied().fold(0.0, f64::max);
    if max_mag <= 0.0 {
        return edges;
    }
    let (low, high) = (low_frac * max_mag, high_frac * max_mag);

    // Non-maximum suppression; the one-pixel border is never an edge.
    let mut thin = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (plus, minus) = match dir[i] {
                0 => (mag[i + 1], mag[i - 1]),
                1 => (mag[i + w + 1], mag[i - w - 1]),
                2 => (mag[i + w], mag[i - w]),
                _ => (mag[i - w + 1], mag[i + w - 1]),
            };
            if m >= plus && m > minus {
                thin[i] = m;
            }
        }
    }

    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high {
            edges.data[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if edges.data[j] == 0 && thin[j] >= low && thin[j] > 0.0 {
                    edges.data[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    edges
}

/// ZNCC of `template` placed with its top-left corner at `(dx, dy)` in `image`.
pub fn zncc_score(template: &FloatImage, image: &FloatImage, dx: isize, dy: isize) -> Result<f64, VerifyError> {
    let (tw, th) = (template.width, template.height);
    if dx < 0 || dy < 0 || dx as usize + tw > image.width || dy as usize + th > image.height {
        return Err(VerifyError::TemplateOutOfBounds { tw, th, dx, dy, iw: image.width, ih: image.height });
    }
    let n = (tw * th) as f64;
    if n == 0.0 {
        return Err(VerifyError::ZeroVariance);
    }
    let (ox, oy) = (dx as usize, dy as usize);
    let patch = |u: usize, v: usize| image.data[(oy + v) * image.width + ox + u];
    let (mut st, mut si) = (0.0, 0.0);
    for v in 0..th {
        for u in 0..tw {
            st += template.data[v * tw + u];
            si += patch(u, v);
        }
    }
    let (mt, mi) = (st / n, si / n);
    let (mut cross, mut vt, mut vi) = (0.0, 0.0, 0.0);
    for v in 0..th {
        for u in 0..tw {
            let a = template.data[v * tw + u] - mt;
            let b = patch(u, v) - mi;
            cross += a * b;
            vt += a * a;
            vi += b * b;
        }
    }
    if vt <= VARIANCE_EPS * n || vi <= VARIANCE_EPS * n {
        return Err(VerifyError::ZeroVariance);
    }
    Ok((cross / (vt * vi).sqrt()).clamp(-1.0, 1.0))
}

pub fn zncc_score_gray(template: &GrayImage, image: &GrayImage, dx: isize, dy: isize) -> Result<f64, VerifyError> {
    zncc_score(&FloatImage::from_gray(template), &FloatImage::from_gray(image), dx, dy)
}

/// Best ZNCC displacement of view B relative to view A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZnccResult {
    pub dx: f64,
    pub dy: f64,
    pub score: f64,
    #[serde(rename = "deviation_px")]
    pub deviation: f64,
    /// Integer argmax before sub-pixel refinement.
    pub peak_dx: i32,
    pub peak_dy: i32,
}

/// What the correlation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    /// Canny edges smoothed with [`EDGE_SMOOTHING_SIGMA`].
    #[default]
    SmoothedEdges,
    /// Raw intensities, no edge detection.
    Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub canny_sigma: f64,
    pub low_frac: f64,
    pub high_frac: f64,
    pub search_radius: usize,
    pub margin: usize,
    pub source: MatchSource,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            canny_sigma: DEFAULT_CANNY_SIGMA,
            low_frac: DEFAULT_LOW_FRAC,
            high_frac: DEFAULT_HIGH_FRAC,
            search_radius: DEFAULT_SEARCH_RADIUS,
            margin: DEFAULT_MARGIN,
            source: MatchSource::SmoothedEdges,
        }
    }
}

/// Summed-area tables of values and squares, one row/column of padding.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(img: &FloatImage) -> Self {
        let stride = img.width + 1;
        let mut sum = vec![0.0; stride * (img.height + 1)];
        let mut sq = vec![0.0; stride * (img.height + 1)];
        for y in 0..img.height {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..img.width {
                let v = img.get(x, y);
                rs += v;
                rq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Self { stride, sum, sq }
    }

    fn rect(table: &[f64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
        table[(y + h) * stride + x + w] - table[y * stride + x + w] - table[(y + h) * stride + x]
            + table[y * stride + x]
    }

    fn stats(&self, x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
        (Self::rect(&self.sum, self.stride, x, y, w, h), Self::rect(&self.sq, self.stride, x, y, w, h))
    }
}

fn quadratic_offset(minus: Option<f64>, centre: f64, plus: Option<f64>) -> f64 {
    match (minus, plus) {
        (Some(m), Some(p)) => {
            let denom = m - 2.0 * centre + p;
            if denom >= 0.0 {
                0.0
            } else {
                (0.5 * (m - p) / denom).clamp(-0.5, 0.5)
            }
        }
        _ => 0.0,
    }
}

/// Searches all integer offsets in `[-radius, radius]²` for the central
/// crop of `a` (inset by `margin`) inside `b`, then refines each axis by a
/// three-point parabola. Constant patches are skipped; ties prefer the
/// shorter offset, then the lexicographically smaller `(dx, dy)`.
pub fn match_float(a: &FloatImage, b: &FloatImage, radius: usize, margin: usize) -> Result<ZnccResult, VerifyError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(VerifyError::SizeMismatch { a: (a.width, a.height), b: (b.width, b.height) });
    }
    if margin < radius {
        return Err(VerifyError::MarginTooSmall { margin, radius });
    }
    let (w, h) = (a.width, a.height);
    if w <= 2 * margin || h <= 2 * margin {
        return Err(VerifyError::EmptyTemplate { margin, width: w, height: h });
    }
    let (tw, th) = (w - 2 * margin, h - 2 * margin);
    let n = (tw * th) as f64;

    let mut template = Vec::with_capacity(tw * th);
    for y in margin..margin + th {
        template.extend_from_slice(&a.data[y * w + margin..y * w + margin + tw]);
    }
    let mean_t = template.iter().sum::<f64>() / n;
    template.iter_mut().for_each(|v| *v -= mean_t);
    let var_t: f64 = template.iter().map(|v| v * v).sum();
    if var_t <= VARIANCE_EPS * n {
        return Err(VerifyError::AllOffsetsUnusable);
    }

    let integral = Integral::new(b);
    let r = radius as isize;
    let side = 2 * radius + 1;
    let scores: Vec<Option<f64>> = (0..side * side)
        .into_par_iter()
        .map(|k| {
            let dx = (k % side) as isize - r;
            let dy = (k / side) as isize - r;
            let (ox, oy) = ((margin as isize + dx) as usize, (margin as isize + dy) as usize);
            let (s, q) = integral.stats(ox, oy, tw, th);
            let var_i = q - s * s / n;
            if var_i <= VARIANCE_EPS * n {
                return None;
            }
            let mut cross = 0.0;
            for v in 0..th {
                let row = &b.data[(oy + v) * w + ox..(oy + v) * w + ox + tw];
                let trow = &template[v * tw..(v + 1) * tw];
                cross += trow.iter().zip(row).map(|(t, i)| t * i).sum::<f64>();
            }
            Some((cross / (var_t * var_i).sqrt()).clamp(-1.0, 1.0))
        })
        .collect();

    let at = |dx: isize, dy: isize| -> Option<f64> {
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        scores[((dy + r) as usize) * side + (dx + r) as usize]
    };

    let mut best: Option<(f64, isize, isize)> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let Some(s) = at(dx, dy) else { continue };
            let better = match best {
                None => true,
                Some((bs, bx, by)) => {
                    if s != bs {
                        s > bs
                    } else {
                        let (d, bd) = (dx * dx + dy * dy, bx * bx + by * by);
                        d < bd || (d == bd && (dx, dy) < (bx, by))
                    }
                }
            };
            if better {
                best = Some((s, dx, dy));
            }
        }
    }
    let (score, px, py) = best.ok_or(VerifyError::AllOffsetsUnusable)?;
    let dx = px as f64 + quadratic_offset(at(px - 1, py), score, at(px + 1, py));
    let dy = py as f64 + quadratic_offset(at(px, py - 1), score, at(px, py + 1));
    Ok(ZnccResult { dx, dy, score, deviation: dx.hypot(dy), peak_dx: px as i32, peak_dy: py as i32 })
}

/// ZNCC matching of two edge maps after smoothing them.
pub fn match_deviation(
    edges_a: &EdgeMap,
    edges_b: &EdgeMap,
    search_radius: usize,
    margin: usize,
) -> Result<ZnccResult, VerifyError> {
    let a = gaussian_blur_float(&edges_a.to_float(), EDGE_SMOOTHING_SIGMA);
    let b = gaussian_blur_float(&edges_b.to_float(), EDGE_SMOOTHING_SIGMA);
    match_float(&a, &b, search_radius, margin)
}

/// Full check on two gray views: Canny on both then [`match_deviation`],
/// or plain intensity correlation when `params.source` says so.
pub fn verify_alignment(a: &GrayImage, b: &GrayImage, params: &VerifyParams) -> Result<ZnccResult, VerifyError> {
    match params.source {
        MatchSource::SmoothedEdges => {
            let ea = canny(a, params.canny_sigma, params.low_frac, params.high_frac)?;
            let eb = canny(b, params.canny_sigma, params.low_frac, params.high_frac)?;
            match_deviation(&ea, &eb, params.search_radius, params.margin)
        }
        MatchSource::Intensity => {
            match_float(&FloatImage::from_gray(a), &FloatImage::from_gray(b), params.search_radius, params.margin)
        }
    }
}
