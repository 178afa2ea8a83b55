//! 8-bit grayscale images and a float working buffer.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
pub use image::GrayImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
}

/// Reads any PGM/PNG file as 8-bit grayscale.
pub fn read_gray(path: &Path) -> Result<GrayImage, ImageIoError> {
    image::open(path)
        .map(|img| img.into_luma8())
        .map_err(|source| ImageIoError::Image { path: path.display().to_string(), source })
}

/// Writes binary PGM (P5) or PNG depending on the extension.
pub fn write_gray(path: &Path, img: &GrayImage) -> Result<(), ImageIoError> {
    let err = |source| ImageIoError::Image { path: path.display().to_string(), source };
    if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return img.save_with_format(path, image::ImageFormat::Png).map_err(err);
    }
    let file = std::fs::File::create(path).map_err(|e| err(image::ImageError::IoError(e)))?;
    let encoder = PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    img.write_with_encoder(encoder).map_err(err)
}

/// Row-major `f64` image used for filtering and correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Self { width: w as usize, height: h as usize, data: img.as_raw().iter().map(|&v| v as f64).collect() }
    }

    /// Rounds to nearest and saturates to `0..=255`.
    pub fn to_gray(&self) -> GrayImage {
        let raw = self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer length matches")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }
}
