//! Synthetic moving scenes with exact ground truth.
//!
//! A single pattern (disk, rectangle or checker board) translates across a
//! uniform background at constant velocity. The event view samples the
//! log-intensity `ln(I + 1)` of every pixel each `dt_us`; a pixel's
//! accumulator collects the change and fires one event per whole contrast
//! threshold `C`, keeping the remainder (carry). Event timestamps are
//! interpolated inside the sub-step. Exposure triggers, time-averaged RGB
//! frames and per-frame ground-truth boxes come from the same scene.
//!
//! Pixel `(i, j)` covers `[i, i+1) × [j, j+1)`; intensities are sampled at
//! pixel centres. A second view through a homography `H` is rendered by
//! mapping each of its pixel centres through `H⁻¹` into scene coordinates,
//! so `H` is exactly the ground truth between the views.

use std::fs;
use std::path::Path;

use image::GrayImage;
use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_io::{
    encode_esf, Edge, EncodeError, Event, EventStream, Polarity, StreamHeader, TriggerEvent, MAX_DIMENSION,
};
use crate::geometry::{BoundingBox, GeometryError, Homography};
use crate::image_io::{write_gray, ImageIoError};
use crate::sync::{write_exposures_csv, ExposureInterval};

/// Outline samples used for the hull of a warped disk.
const DISK_OUTLINE_SAMPLES: usize = 720;
/// Checker boards are `CHECKER_CELLS × CHECKER_CELLS` squares.
pub const CHECKER_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Disk,
    Rectangle,
    Checker,
}

impl Pattern {
    pub fn class_name(self) -> &'static str {
        match self {
            Pattern::Disk => "disk",
            Pattern::Rectangle => "rectangle",
            Pattern::Checker => "checker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: u16,
    pub height: u16,
    pub pattern: Pattern,
    /// Diameter of the disk or side of the square patterns, px.
    pub pattern_size: f64,
    /// px/s.
    pub velocity: [f64; 2],
    /// Pattern centre at t = 0; defaults to the canvas centre shifted back
    /// by half the travel so the pattern crosses the middle mid-scene.
    pub start: Option<[f64; 2]>,
    pub duration_s: f64,
    pub background: f64,
    pub foreground: f64,
    /// Contrast threshold in log-intensity units.
    pub contrast_threshold: f64,
    pub fps: f64,
    pub exposure_us: u64,
    pub dt_us: u64,
    /// Width of the linear edge ramp, px. 0 gives hard edges.
    pub edge_softness: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            pattern: Pattern::Disk,
            pattern_size: 30.0,
            velocity: [100.0, 0.0],
            start: None,
            duration_s: 0.3,
            background: 20.0,
            foreground: 200.0,
            contrast_threshold: 0.15,
            fps: 20.0,
            exposure_us: 2000,
            dt_us: 200,
            edge_softness: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.width == 0 || self.height == 0 || self.width > MAX_DIMENSION || self.height > MAX_DIMENSION {
            return bad("canvas must be 1..=2048 px per side");
        }
        if !(self.pattern_size > 0.0) {
            return bad("pattern_size must be positive");
        }
        if !(self.contrast_threshold > 0.0) {
            return bad("contrast_threshold must be positive");
        }
        if !(self.fps > 0.0 && self.duration_s > 0.0) || self.fps * self.duration_s < 2.0 {
            return bad("fps * duration_s must be at least 2");
        }
        if self.dt_us == 0 || self.dt_us > self.exposure_us {
            return bad("need 0 < dt_us <= exposure_us");
        }
        if self.exposure_us >= self.frame_period_us() {
            return bad("exposure must be shorter than the frame period");
        }
        if !(0.0..=255.0).contains(&self.background) || !(0.0..=255.0).contains(&self.foreground) {
            return bad("intensities must lie in 0..=255");
        }
        if !(self.edge_softness >= 0.0) || !self.velocity.iter().all(|v| v.is_finite()) {
            return bad("edge_softness must be >= 0 and velocity finite");
        }
        Ok(())
    }

    pub fn frame_period_us(&self) -> u64 {
        (1e6 / self.fps).round() as u64
    }

    pub fn duration_us(&self) -> u64 {
        (self.duration_s * 1e6).round() as u64
    }

    /// Exposure `k` is centred in the `k`-th frame slot.
    pub fn exposures(&self) -> Vec<ExposureInterval> {
        let period = self.frame_period_us();
        let frames = (self.duration_us() / period) as u32;
        (0..frames)
            .map(|k| {
                let start = k as u64 * period + (period - self.exposure_us) / 2;
                ExposureInterval { frame_id: k, start, end: start + self.exposure_us }
            })
            .collect()
    }

    pub fn centre_at(&self, t_us: f64) -> Point2<f64> {
        let t = t_us * 1e-6;
        let [vx, vy] = self.velocity;
        let [sx, sy] = self.start.unwrap_or_else(|| {
            let half = self.duration_s / 2.0;
            [self.width as f64 / 2.0 - vx * half, self.height as f64 / 2.0 - vy * half]
        });
        Point2::new(sx + vx * t, sy + vy * t)
    }

    /// Fraction of the pattern's foreground at scene point `p`.
    pub fn coverage(&self, p: Point2<f64>, t_us: f64) -> f64 {
        let c = self.centre_at(t_us);
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        let half = self.pattern_size / 2.0;
        let soft = self.edge_softness.max(1e-9);
        let ramp = |inside: f64| (inside / soft + 0.5).clamp(0.0, 1.0);
        match self.pattern {
            Pattern::Disk => ramp(half - dx.hypot(dy)),
            Pattern::Rectangle => ramp(half - dx.abs()) * ramp(half - dy.abs()),
            Pattern::Checker => {
                let cov = ramp(half - dx.abs()) * ramp(half - dy.abs());
                if cov == 0.0 {
                    return 0.0;
                }
                let cell = self.pattern_size / CHECKER_CELLS as f64;
                let i = ((dx + half) / cell).floor() as i64;
                let j = ((dy + half) / cell).floor() as i64;
                if (i + j).rem_euclid(2) == 0 {
                    cov
                } else {
                    0.0
                }
            }
        }
    }

    pub fn intensity(&self, p: Point2<f64>, t_us: f64) -> f64 {
        self.background + (self.foreground - self.background) * self.coverage(p, t_us)
    }

    /// Scene-space box outside which the intensity is exactly background.
    fn support(&self, t_us: f64) -> (Point2<f64>, Point2<f64>) {
        let c = self.centre_at(t_us);
        let r = self.pattern_size / 2.0 + self.edge_softness / 2.0 + 1.0;
        (Point2::new(c.x - r, c.y - r), Point2::new(c.x + r, c.y + r))
    }

    pub fn ground_truth_box(&self, frame_id: u32, t_us: f64) -> BoundingBox {
        let c = self.centre_at(t_us);
        let s = self.pattern_size;
        BoundingBox::new(frame_id, self.pattern.class_name(), c.x - s / 2.0, c.y - s / 2.0, s, s)
    }

    fn outline(&self, t_us: f64) -> Vec<Point2<f64>> {
        let c = self.centre_at(t_us);
        let h = self.pattern_size / 2.0;
        match self.pattern {
            Pattern::Disk => (0..DISK_OUTLINE_SAMPLES)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / DISK_OUTLINE_SAMPLES as f64;
                    Point2::new(c.x + h * a.cos(), c.y + h * a.sin())
                })
                .collect(),
            Pattern::Rectangle | Pattern::Checker => vec![
                Point2::new(c.x - h, c.y - h),
                Point2::new(c.x + h, c.y - h),
                Point2::new(c.x + h, c.y + h),
                Point2::new(c.x - h, c.y + h),
            ],
        }
    }
}

/// Per-pixel starting accumulator, uniform in `[-C/2, C/2)`, drawn
/// row-major from a ChaCha8 stream seeded with `spec.seed`.
pub fn initial_accumulators(spec: &SceneSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.contrast_threshold;
    (0..spec.width as usize * spec.height as usize).map(|_| rng.gen_range(-0.5 * c..0.5 * c)).collect()
}

/// One rendered camera view of a scene.
#[derive(Debug, Clone)]
pub struct SceneOutputs {
    pub spec: SceneSpec,
    /// Map from scene coordinates to this view; `None` for the scene itself.
    pub view: Option<Homography>,
    pub stream: EventStream,
    pub frames: Vec<GrayImage>,
    pub exposures: Vec<ExposureInterval>,
    pub labels: Vec<BoundingBox>,
}

/// Camera model: scene coordinates seen through an optional homography.
struct View<'a> {
    spec: &'a SceneSpec,
    to_scene: Option<Homography>,
    to_view: Option<Homography>,
}

impl View<'_> {
    fn intensity(&self, px: usize, py: usize, t_us: f64) -> f64 {
        let q = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
        let p = match &self.to_scene {
            // Canvas corners were checked, so every pixel centre projects.
            Some(h) => h.project(q).unwrap_or(q),
            None => q,
        };
        self.spec.intensity(p, t_us)
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` that may differ from background
    /// at either of the two times.
    fn active_region(&self, t_a: f64, t_b: f64) -> (usize, usize, usize, usize) {
        let (w, h) = (self.spec.width as f64, self.spec.height as f64);
        let (a0, a1) = self.spec.support(t_a);
        let (b0, b1) = self.spec.support(t_b);
        let lo = Point2::new(a0.x.min(b0.x), a0.y.min(b0.y));
        let hi = Point2::new(a1.x.max(b1.x), a1.y.max(b1.y));
        let (lo, hi) = match &self.to_view {
            None => (lo, hi),
            Some(hm) => {
                let corners = [lo, Point2::new(hi.x, lo.y), hi, Point2::new(lo.x, hi.y)];
                let mapped: Option<Vec<Point2<f64>>> = same_side(hm, &corners)
                    .then(|| corners.iter().map(|c| hm.project(*c).ok()).collect())
                    .flatten();
                match mapped {
                    Some(pts) => {
                        let bb = BoundingBox::hull_of(0, "", pts).expect("four corners");
                        (Point2::new(bb.x - 1.0, bb.y - 1.0), Point2::new(bb.x + bb.w + 1.0, bb.y + bb.h + 1.0))
                    }
                    None => (Point2::new(0.0, 0.0), Point2::new(w, h)),
                }
            }
        };
        let clamp = |v: f64, max: f64| v.floor().clamp(0.0, max) as usize;
        (clamp(lo.x, w), clamp(hi.x + 1.0, w), clamp(lo.y, h), clamp(hi.y + 1.0, h))
    }
}

/// True when all points lie strictly on one side of the line at infinity.
fn same_side(h: &Homography, pts: &[Point2<f64>]) -> bool {
    let m = h.matrix();
    let w: Vec<f64> = pts.iter().map(|p| m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)]).collect();
    w.iter().all(|&v| v > 1e-12) || w.iter().all(|&v| v < -1e-12)
}

fn render(spec: &SceneSpec, view_h: Option<Homography>) -> Result<SceneOutputs, SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width as usize, spec.height as usize);
    let to_scene = view_h.map(|hm| hm.inverse());
    if let Some(inv) = &to_scene {
        let corners = [
            Point2::new(0.0, 0.0),
            Point2::new(w as f64, 0.0),
            Point2::new(w as f64, h as f64),
            Point2::new(0.0, h as f64),
        ];
        if !same_side(inv, &corners) {
            return Err(GeometryError::PointAtInfinity.into());
        }
    }
    let view = View { spec, to_scene, to_view: view_h };

    let c = spec.contrast_threshold;
    let dt = spec.dt_us;
    let steps = spec.duration_us() / dt;
    let mut acc = initial_accumulators(spec);
    let mut log_i: Vec<f64> = (0..w * h).map(|i| (view.intensity(i % w, i / w, 0.0) + 1.0).ln()).collect();

    let mut events = Vec::new();
    let mut step_events = Vec::new();
    for j in 1..=steps {
        let (t_prev, t_cur) = ((j - 1) * dt, j * dt);
        let (x0, x1, y0, y1) = view.active_region(t_prev as f64, t_cur as f64);
        step_events.clear();
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                let l = (view.intensity(x, y, t_cur as f64) + 1.0).ln();
                let delta = l - log_i[i];
                log_i[i] = l;
                if delta == 0.0 {
                    continue;
                }
                let a0 = acc[i];
                let a = a0 + delta;
                let n = (a.abs() / c).floor();
                if n < 1.0 {
                    acc[i] = a;
                    continue;
                }
                let s = a.signum();
                let polarity = if s > 0.0 { Polarity::Positive } else { Polarity::Negative };
                for k in 1..=n as u64 {
                    let frac = ((s * k as f64 * c - a0) / delta).clamp(0.0, 1.0);
                    let t = t_prev + (frac * dt as f64).floor() as u64;
                    step_events.push(Event::new(t.min(t_cur), x as u16, y as u16, polarity));
                }
                acc[i] = a - s * n * c;
            }
        }
        step_events.sort_by_key(|e| e.t);
        events.extend_from_slice(&step_events);
    }

    let exposures = spec.exposures();
    let mut triggers = Vec::with_capacity(2 * exposures.len());
    for e in &exposures {
        triggers.push(TriggerEvent::new(e.start, Edge::Rising, 0));
        triggers.push(TriggerEvent::new(e.end, Edge::Falling, 0));
    }
    let stream = EventStream::merge(StreamHeader::new(spec.width, spec.height), &events, &triggers);

    let frames = exposures
        .iter()
        .map(|e| {
            let samples: Vec<f64> = (e.start..e.end).step_by(dt as usize).map(|t| t as f64).collect();
            let n = samples.len() as f64;
            let raw = (0..w * h)
                .map(|i| {
                    let sum: f64 = samples.iter().map(|&t| view.intensity(i % w, i / w, t)).sum();
                    (sum / n).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer length matches")
        })
        .collect();

    let labels = exposures
        .iter()
        .map(|e| {
            let t_mid = (e.start + e.end) as f64 / 2.0;
            match &view_h {
                None => Ok(spec.ground_truth_box(e.frame_id, t_mid)),
                Some(hm) => {
                    if !same_side(hm, &spec.outline(t_mid)) {
                        return Err(GeometryError::PointAtInfinity);
                    }
                    let pts = spec.outline(t_mid).into_iter().map(|p| hm.project(p)).collect::<Result<Vec<_>, _>>()?;
                    Ok(BoundingBox::hull_of(e.frame_id, spec.pattern.class_name(), pts).expect("non-empty outline"))
                }
            }
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;

    Ok(SceneOutputs { spec: spec.clone(), view: view_h, stream, frames, exposures, labels })
}

/// Renders the scene as seen by the reference camera.
pub fn gen_scene(spec: &SceneSpec) -> Result<SceneOutputs, SynthError> {
    render(spec, None)
}

/// Renders the same scene through `h` (reference view → new view). The
/// pattern is warped before rasterisation, not the events.
pub fn warp_view(scene: &SceneOutputs, h: &Homography) -> Result<SceneOutputs, SynthError> {
    let total = match &scene.view {
        Some(prev) => h.compose(prev)?,
        None => *h,
    };
    render(&scene.spec, Some(total))
}

impl SceneOutputs {
    /// Writes `events.esf`, `exposures.csv`, `labels.json`,
    /// `frames/frame_<id>.pgm`, `scene.json` and, for warped views,
    /// `homography.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir.join("frames"))?;
        fs::write(dir.join("events.esf"), encode_esf(&self.stream)?)?;
        fs::write(dir.join("exposures.csv"), write_exposures_csv(&self.exposures))?;
        fs::write(dir.join("labels.json"), serde_json::to_string_pretty(&self.labels)?)?;
        fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&self.spec)?)?;
        if let Some(h) = &self.view {
            fs::write(dir.join("homography.json"), serde_json::to_string_pretty(h)?)?;
        }
        for (e, frame) in self.exposures.iter().zip(&self.frames) {
            write_gray(&dir.join("frames").join(format!("frame_{}.pgm", e.frame_id)), frame)?;
        }
        Ok(())
    }
}
