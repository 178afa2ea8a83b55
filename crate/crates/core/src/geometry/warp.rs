use image::GrayImage;
use nalgebra::Point2;

use super::{GeometryError, Homography};

/// Resamples `src` into a `width × height` canvas so that output pixel
/// centre `q` takes the bilinear value of `src` at `h⁻¹(q)`. Samples
/// outside the source repeat its border.
pub fn warp_image(src: &GrayImage, h: &Homography, width: u32, height: u32) -> Result<GrayImage, GeometryError> {
    let inv = h.inverse();
    let (sw, sh) = (src.width() as i64, src.height() as i64);
    if sw == 0 || sh == 0 {
        return Err(GeometryError::EmptyInput);
    }
    let px = |x: i64, y: i64| src.get_pixel(x.clamp(0, sw - 1) as u32, y.clamp(0, sh - 1) as u32)[0] as f64;
    let mut raw = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            let p = inv.project(Point2::new(x as f64 + 0.5, y as f64 + 0.5))?;
            let (u, v) = (p.x - 0.5, p.y - 0.5);
            let (x0, y0) = (u.floor(), v.floor());
            let (fx, fy) = (u - x0, v - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
            let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
            raw.push((top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayImage::from_raw(width, height, raw).expect("buffer length matches"))
}
