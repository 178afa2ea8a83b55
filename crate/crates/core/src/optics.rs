//! Thin-lens sensor arithmetic: pixel pitch, object size on the sensor,
//! field of view and crop-factor focal lengths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Objects smaller than this many pixels are flagged as hard to detect.
pub const DETECTABILITY_WARN_PX: f64 = 3.0;

const PRESETS_JSON: &str = include_str!("../data/presets.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("distance {distance_m} m must exceed the focal length")]
    TooClose { distance_m: f64 },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

fn positive(v: f64, what: &'static str) -> Result<f64, OpticsError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(OpticsError::NonPositive(what))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub width_px: u32,
    pub height_px: u32,
    pub pitch_um: f64,
}

impl SensorSpec {
    pub fn new(name: impl Into<String>, width_px: u32, height_px: u32, pitch_um: f64) -> Self {
        Self { name: name.into(), description: String::new(), width_px, height_px, pitch_um }
    }

    /// Sensor from its format diagonal; pitch via [`pixel_pitch`].
    pub fn from_diagonal(name: impl Into<String>, diagonal_mm: f64, width_px: u32, height_px: u32) -> Result<Self, OpticsError> {
        Ok(Self::new(name, width_px, height_px, pixel_pitch(diagonal_mm, width_px, height_px)?))
    }

    pub fn width_mm(&self) -> f64 {
        self.pitch_um * self.width_px as f64 / 1000.0
    }

    pub fn height_mm(&self) -> f64 {
        self.pitch_um * self.height_px as f64 / 1000.0
    }

    pub fn diagonal_mm(&self) -> f64 {
        self.width_mm().hypot(self.height_mm())
    }

    fn validate(&self) -> Result<(), OpticsError> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(OpticsError::NonPositive("sensor resolution"));
        }
        positive(self.pitch_um, "pixel pitch").map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensSpec {
    pub name: String,
    #[serde(default)]
    pub camera: String,
    #[serde(default)]
    pub model: String,
    pub focal_mm: f64,
    /// Informational only.
    #[serde(default)]
    pub distortion_pct: f64,
    /// Crop-factor focal length printed on the lens sheet, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listed_effective_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presets {
    pub sensors: Vec<SensorSpec>,
    pub lenses: Vec<LensSpec>,
}

impl Presets {
    /// The presets shipped with the crate.
    pub fn bundled() -> Self {
        serde_json::from_str(PRESETS_JSON).expect("bundled presets are valid JSON")
    }

    pub fn sensor(&self, name: &str) -> Result<&SensorSpec, OpticsError> {
        self.sensors
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| OpticsError::UnknownPreset(name.to_string()))
    }

    pub fn lens(&self, name: &str) -> Result<&LensSpec, OpticsError> {
        self.lenses
            .iter()
            .find(|l| l.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| OpticsError::UnknownPreset(name.to_string()))
    }
}

/// Pixel pitch in µm from the sensor diagonal and resolution.
pub fn pixel_pitch(diagonal_mm: f64, width_px: u32, height_px: u32) -> Result<f64, OpticsError> {
    positive(diagonal_mm, "diagonal")?;
    if width_px == 0 || height_px == 0 {
        return Err(OpticsError::NonPositive("sensor resolution"));
    }
    Ok(1000.0 * diagonal_mm / (width_px as f64).hypot(height_px as f64))
}

/// Image extent in pixels of an object of `object_size_m` at `distance_m`.
pub fn object_extent_px(object_size_m: f64, distance_m: f64, focal_mm: f64, pitch_um: f64) -> Result<f64, OpticsError> {
    positive(object_size_m, "object size")?;
    positive(distance_m, "distance")?;
    positive(focal_mm, "focal length")?;
    positive(pitch_um, "pixel pitch")?;
    if distance_m * 1000.0 <= focal_mm {
        return Err(OpticsError::TooClose { distance_m });
    }
    Ok(focal_mm * object_size_m / distance_m * 1000.0 / pitch_um)
}

/// Ratio of sensor diagonals, `reference / target`.
pub fn crop_factor(reference: &SensorSpec, target: &SensorSpec) -> Result<f64, OpticsError> {
    reference.validate()?;
    target.validate()?;
    Ok(reference.diagonal_mm() / target.diagonal_mm())
}

pub fn effective_focal(focal_mm: f64, ratio: f64) -> Result<f64, OpticsError> {
    Ok(positive(focal_mm, "focal length")? * positive(ratio, "crop factor")?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldOfView {
    pub horizontal_deg: f64,
    pub vertical_deg: f64,
    pub diagonal_deg: f64,
}

pub fn field_of_view(sensor: &SensorSpec, focal_mm: f64) -> Result<FieldOfView, OpticsError> {
    sensor.validate()?;
    positive(focal_mm, "focal length")?;
    let angle = |extent_mm: f64| 2.0 * (extent_mm / (2.0 * focal_mm)).atan().to_degrees();
    Ok(FieldOfView {
        horizontal_deg: angle(sensor.width_mm()),
        vertical_deg: angle(sensor.height_mm()),
        diagonal_deg: angle(sensor.diagonal_mm()),
    })
}

/// Result row for one object/distance/lens combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionEstimate {
    pub object_m: f64,
    pub distance_m: f64,
    pub focal_mm: f64,
    pub pitch_um: f64,
    pub extent_px: f64,
    pub rounded_px: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn resolution_estimate(object_m: f64, distance_m: f64, focal_mm: f64, pitch_um: f64) -> Result<ResolutionEstimate, OpticsError> {
    let extent_px = object_extent_px(object_m, distance_m, focal_mm, pitch_um)?;
    let warning = (extent_px < DETECTABILITY_WARN_PX).then(|| {
        format!("object spans {extent_px:.2} px (< {DETECTABILITY_WARN_PX} px); events may be too sparse to detect it")
    });
    Ok(ResolutionEstimate { object_m, distance_m, focal_mm, pitch_um, extent_px, rounded_px: extent_px.round(), warning })
}
