//! Image-plane operations: landmark alignment and augmentation transforms.

mod augment;
mod geometry;
mod image;

pub use self::augment::{
    augment, channel_shift, five_crop, resize, rotate, zoom, CROP_OFFSETS, CROP_SIZE,
    MAX_ROTATION_DEG, RESIZED_SIZE,
};
pub use self::geometry::{
    align_face, canonical_template, fit_similarity, read_landmarks, warp, LandmarkSet, Point,
    SimilarityTransform, ALIGNED_SIZE,
};
pub use self::image::RasterImage;
