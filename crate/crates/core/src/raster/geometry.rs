//! Five-point similarity alignment.
//!
//! Pixel `(x, y)` has its center at coordinate `(x, y)`; the y axis points
//! down. Rotations are in radians, positive from +x toward +y.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::RasterImage;
use crate::error::{Error, Result};

/// Side length of aligned face crops.
pub const ALIGNED_SIZE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Five facial landmarks, in the order: left eye center, right eye center,
/// nose tip, left lip corner, right lip corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    points: [Point; 5],
}

impl LandmarkSet {
    pub fn new(points: [Point; 5]) -> Result<Self> {
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput(
                "landmark coordinates must be finite".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Builds from `[lx, ly, rx, ry, nx, ny, lmx, lmy, rmx, rmy]`.
    pub fn from_coords(c: [f64; 10]) -> Result<Self> {
        Self::new(std::array::from_fn(|i| Point::new(c[2 * i], c[2 * i + 1])))
    }

    pub fn points(&self) -> &[Point; 5] {
        &self.points
    }

    pub fn left_eye(&self) -> Point {
        self.points[0]
    }

    pub fn right_eye(&self) -> Point {
        self.points[1]
    }

    pub fn map(&self, t: &SimilarityTransform) -> Self {
        Self {
            points: self.points.map(|p| t.apply(p)),
        }
    }
}

/// Landmark positions in the 256x256 aligned frame.
pub fn canonical_template() -> LandmarkSet {
    LandmarkSet {
        points: [
            Point::new(88.0, 102.0),
            Point::new(168.0, 102.0),
            Point::new(128.0, 144.0),
            Point::new(96.0, 184.0),
            Point::new(160.0, 184.0),
        ],
    }
}

/// `p -> scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: f64,
    tx: f64,
    ty: f64,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: f64, translation: (f64, f64)) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "similarity scale must be positive, got {scale}"
            )));
        }
        if !rotation.is_finite() || !translation.0.is_finite() || !translation.1.is_finite() {
            return Err(Error::InvalidArgument(
                "similarity parameters must be finite".into(),
            ));
        }
        Ok(Self {
            scale,
            rotation,
            tx: translation.0,
            ty: translation.1,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    /// Scale and rotation about `center` instead of the origin.
    pub fn about(center: Point, scale: f64, rotation: f64) -> Result<Self> {
        let (s, c) = rotation.sin_cos();
        let rx = scale * (c * center.x - s * center.y);
        let ry = scale * (s * center.x + c * center.y);
        Self::new(scale, rotation, (center.x - rx, center.y - ry))
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn translation(&self) -> (f64, f64) {
        (self.tx, self.ty)
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.tx,
            self.scale * (s * p.x + c * p.y) + self.ty,
        )
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.rotation.sin_cos();
        let inv = 1.0 / self.scale;
        // R(-θ) t / s
        let tx = inv * (c * self.tx + s * self.ty);
        let ty = inv * (-s * self.tx + c * self.ty);
        Self {
            scale: inv,
            rotation: -self.rotation,
            tx: -tx,
            ty: -ty,
        }
    }
}

/// Least-squares similarity taking `src` onto `dst` (2-D scaled Procrustes).
pub fn fit_similarity(src: &LandmarkSet, dst: &LandmarkSet) -> Result<SimilarityTransform> {
    fit_points(src.points(), dst.points())
}

pub(crate) fn fit_points(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform> {
    assert_eq!(src.len(), dst.len());
    let n = src.len() as f64;
    let centroid = |pts: &[Point]| {
        let (sx, sy) = pts
            .iter()
            .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point::new(sx / n, sy / n)
    };
    let cs = centroid(src);
    let cd = centroid(dst);

    let mut var = 0.0;
    let mut dot = 0.0;
    let mut cross = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let (ax, ay) = (a.x - cs.x, a.y - cs.y);
        let (bx, by) = (b.x - cd.x, b.y - cd.y);
        var += ax * ax + ay * ay;
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
    }
    let magnitude = 1.0 + cs.x * cs.x + cs.y * cs.y;
    if var <= f64::EPSILON * magnitude * n {
        return Err(Error::DegenerateGeometry(
            "source landmarks are coincident".into(),
        ));
    }
    let scale = dot.hypot(cross) / var;
    if scale <= f64::EPSILON {
        return Err(Error::DegenerateGeometry(
            "target landmarks are coincident".into(),
        ));
    }
    let rotation = cross.atan2(dot);
    let (s, c) = rotation.sin_cos();
    let tx = cd.x - scale * (c * cs.x - s * cs.y);
    let ty = cd.y - scale * (s * cs.x + c * cs.y);
    SimilarityTransform::new(scale, rotation, (tx, ty))
}

/// Bilinear sample at a fractional position; taps outside the image are black.
pub(crate) fn sample_bilinear(img: &RasterImage, x: f64, y: f64) -> [u8; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let taps = [
        (img.pixel_or_black(xi, yi), (1.0 - fx) * (1.0 - fy)),
        (img.pixel_or_black(xi + 1, yi), fx * (1.0 - fy)),
        (img.pixel_or_black(xi, yi + 1), (1.0 - fx) * fy),
        (img.pixel_or_black(xi + 1, yi + 1), fx * fy),
    ];
    std::array::from_fn(|c| {
        let v: f64 = taps.iter().map(|(px, w)| px[c] as f64 * w).sum();
        v.round().clamp(0.0, 255.0) as u8
    })
}

/// Resamples `img` through `t` into an `out_w x out_h` grid.
///
/// `t` maps source coordinates to output coordinates; every output pixel is
/// pulled from `t⁻¹(x, y)` with bilinear interpolation and black fill.
pub fn warp(
    img: &RasterImage,
    t: &SimilarityTransform,
    out_w: u32,
    out_h: u32,
) -> Result<RasterImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "output size must be positive, got {out_w}x{out_h}"
        )));
    }
    let inv = t.inverse();
    RasterImage::from_fn(out_w, out_h, |x, y| {
        let src = inv.apply(Point::new(x as f64, y as f64));
        sample_bilinear(img, src.x, src.y)
    })
}

/// Aligns a face to the canonical template and returns a 256x256 crop.
pub fn align_face(img: &RasterImage, lm: &LandmarkSet) -> Result<RasterImage> {
    let t = fit_similarity(lm, &canonical_template())?;
    warp(img, &t, ALIGNED_SIZE, ALIGNED_SIZE)
}

#[derive(Debug, Deserialize)]
struct LandmarkRow {
    image_id: String,
    lx: f64,
    ly: f64,
    rx: f64,
    ry: f64,
    nx: f64,
    ny: f64,
    lmx: f64,
    lmy: f64,
    rmx: f64,
    rmy: f64,
}

const LANDMARK_HEADER: [&str; 11] = [
    "image_id", "lx", "ly", "rx", "ry", "nx", "ny", "lmx", "lmy", "rmx", "rmy",
];

/// Reads a landmark CSV (`image_id,lx,ly,rx,ry,nx,ny,lmx,lmy,rmx,rmy`).
pub fn read_landmarks(path: &Path) -> Result<Vec<(String, LandmarkSet)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::schema(path, e.to_string()))?
        .clone();
    if header.iter().ne(LANDMARK_HEADER) {
        return Err(Error::schema(
            path,
            format!("expected header `{}`", LANDMARK_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<LandmarkRow>().enumerate() {
        let line = i + 2;
        let r = row.map_err(|e| Error::schema(path, format!("row {line}: {e}")))?;
        let lm = LandmarkSet::from_coords([
            r.lx, r.ly, r.rx, r.ry, r.nx, r.ny, r.lmx, r.lmy, r.rmx, r.rmy,
        ])
        .map_err(|e| Error::schema(path, format!("row {line}: {e}")))?;
        out.push((r.image_id, lm));
    }
    Ok(out)
}
