//! Rotation, zoom, channel shift, resize and the five-crop used for
//! training-set augmentation.

use super::geometry::{sample_bilinear, warp, Point, SimilarityTransform};
use super::image::RasterImage;
use crate::error::{Error, Result};

pub const RESIZED_SIZE: u32 = 256;
pub const CROP_SIZE: u32 = 224;
/// Top-left corners `(x, y)` of the five crops: four corners, then center.
pub const CROP_OFFSETS: [(u32, u32); 5] = [(0, 0), (32, 0), (0, 32), (32, 32), (16, 16)];
pub const MAX_ROTATION_DEG: f64 = 45.0;

fn center(img: &RasterImage) -> Point {
    Point::new(
        (img.width() as f64 - 1.0) / 2.0,
        (img.height() as f64 - 1.0) / 2.0,
    )
}

/// Rotates about the image center, keeping the dimensions.
pub fn rotate(img: &RasterImage, degrees: f64) -> Result<RasterImage> {
    if !degrees.is_finite() || degrees.abs() > MAX_ROTATION_DEG {
        return Err(Error::InvalidArgument(format!(
            "rotation must be within ±{MAX_ROTATION_DEG} degrees, got {degrees}"
        )));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let t = SimilarityTransform::about(center(img), 1.0, degrees.to_radians())?;
    warp(img, &t, img.width(), img.height())
}

/// Scales about the image center. `factor > 1` zooms in on the central
/// `1/factor` window; `factor < 1` shrinks the content and pads with black.
pub fn zoom(img: &RasterImage, factor: f64) -> Result<RasterImage> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "zoom factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let t = SimilarityTransform::about(center(img), factor, 0.0)?;
    warp(img, &t, img.width(), img.height())
}

/// Adds `deltas[c]` to channel `c` of every pixel, saturating at 0 and 255.
pub fn channel_shift(img: &RasterImage, deltas: [i16; 3]) -> RasterImage {
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v as i16 + deltas[i % 3]).clamp(0, 255) as u8)
        .collect();
    RasterImage::new(img.width(), img.height(), data).expect("same dimensions")
}

/// Bilinear resize with pixel-area alignment and edge clamping.
pub fn resize(img: &RasterImage, width: u32, height: u32) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {width}x{height}"
        )));
    }
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    RasterImage::from_fn(width, height, |x, y| {
        let u = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
        let v = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        sample_bilinear(img, u, v)
    })
}

/// The four corner crops and the center crop of a 256x256 image.
pub fn five_crop(img: &RasterImage) -> Result<[RasterImage; 5]> {
    if img.width() != RESIZED_SIZE || img.height() != RESIZED_SIZE {
        return Err(Error::InvalidArgument(format!(
            "five-crop needs a {RESIZED_SIZE}x{RESIZED_SIZE} image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let crops = CROP_OFFSETS.map(|(x, y)| img.crop(x, y, CROP_SIZE, CROP_SIZE));
    let [a, b, c, d, e] = crops;
    Ok([a?, b?, c?, d?, e?])
}

/// Resizes to 256x256, rotates, zooms, shifts channels, then returns crop
/// `crop_index` of the five-crop.
pub fn augment(
    img: &RasterImage,
    rotation_deg: f64,
    zoom_factor: f64,
    deltas: [i16; 3],
    crop_index: usize,
) -> Result<RasterImage> {
    if crop_index >= CROP_OFFSETS.len() {
        return Err(Error::InvalidArgument(format!(
            "crop index must be 0..5, got {crop_index}"
        )));
    }
    let base = resize(img, RESIZED_SIZE, RESIZED_SIZE)?;
    let rotated = rotate(&base, rotation_deg)?;
    let zoomed = zoom(&rotated, zoom_factor)?;
    let shifted = channel_shift(&zoomed, deltas);
    let (x, y) = CROP_OFFSETS[crop_index];
    shifted.crop(x, y, CROP_SIZE, CROP_SIZE)
}
