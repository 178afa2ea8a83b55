//! Constant-window event accumulation into 2D frames.

use std::str::FromStr;

use image::GrayImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_io::Event;

/// Default saturation level used when rendering frames.
pub const DEFAULT_CLIP: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationMode {
    /// Number of events per pixel.
    Count,
    /// Signed sum of polarities.
    Polarity,
    /// 1 if the pixel fired at all.
    Binary,
}

impl FromStr for AccumulationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(Self::Count),
            "polarity" => Ok(Self::Polarity),
            "binary" => Ok(Self::Binary),
            _ => Err(format!("unknown accumulation mode {s:?} (count|polarity|binary)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("event {index} at ({x},{y}) outside {width}x{height}")]
pub struct CoordinateOutOfBounds {
    pub index: usize,
    pub x: u16,
    pub y: u16,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    pub width: usize,
    pub height: usize,
    pub mode: AccumulationMode,
    /// Row-major accumulator cells.
    pub cells: Vec<i32>,
}

impl EventFrame {
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.cells[y * self.width + x]
    }
}

pub fn accumulate(
    events: &[Event],
    width: usize,
    height: usize,
    mode: AccumulationMode,
) -> Result<EventFrame, CoordinateOutOfBounds> {
    let mut cells = vec![0i32; width * height];
    for (index, e) in events.iter().enumerate() {
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            return Err(CoordinateOutOfBounds { index, x: e.x, y: e.y, width, height });
        }
        let cell = &mut cells[y * width + x];
        match mode {
            AccumulationMode::Count => *cell += 1,
            AccumulationMode::Polarity => *cell += e.polarity.sign(),
            AccumulationMode::Binary => *cell = 1,
        }
    }
    Ok(EventFrame { width, height, mode, cells })
}

/// Maps accumulator cells to 8-bit gray.
///
/// Polarity frames centre on 128 and saturate at `±clip` (1 and 255); count
/// frames scale `0..=clip` onto `0..=255`; binary frames are 0 or 255.
pub fn render_gray(frame: &EventFrame, clip: u32) -> GrayImage {
    let c = clip.max(1) as f64;
    let raw = frame
        .cells
        .iter()
        .map(|&v| match frame.mode {
            // Rounding the signed offset keeps ties symmetric about 128.
            AccumulationMode::Polarity => (128.0 + (127.0 * (v as f64).clamp(-c, c) / c).round()) as u8,
            AccumulationMode::Count => (255.0 * (v as f64).min(c) / c).round() as u8,
            AccumulationMode::Binary => {
                if v != 0 {
                    255
                } else {
                    0
                }
            }
        })
        .collect();
    GrayImage::from_raw(frame.width as u32, frame.height as u32, raw).expect("buffer length matches")
}
