//! Rubber-sheet unwrapping of the iris annulus into a fixed
//! `radial_res x angular_res` rectangle.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{EyeImage, SampleMeta};
use crate::raster::Mask;
use crate::segmentation::SegmentationResult;

pub const DEFAULT_RADIAL_RES: usize = 64;
pub const DEFAULT_ANGULAR_RES: usize = 512;

/// Minimum fraction of valid samples in a normalized iris.
const MIN_VALID_FRACTION: f64 = 0.10;

/// Unwrapped iris texture. Row `i` is the radial position (0 at the pupil),
/// column `j` the angle `2*pi*j/angular_res`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIris {
    radial_res: usize,
    angular_res: usize,
    texture: Vec<f32>,
    mask: Vec<bool>,
    pub meta: SampleMeta,
}

impl NormalizedIris {
    pub fn new(
        radial_res: usize,
        angular_res: usize,
        texture: Vec<f32>,
        mask: Vec<bool>,
        meta: SampleMeta,
    ) -> Result<Self> {
        let n = radial_res * angular_res;
        if n == 0 || texture.len() != n || mask.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "normalized iris buffers must hold {radial_res}x{angular_res} samples"
            )));
        }
        Ok(Self {
            radial_res,
            angular_res,
            texture,
            mask,
            meta,
        })
    }

    pub fn radial_res(&self) -> usize {
        self.radial_res
    }

    pub fn angular_res(&self) -> usize {
        self.angular_res
    }

    pub fn texture(&self) -> &[f32] {
        &self.texture
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.mask
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f32 {
        self.texture[i * self.angular_res + j]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.angular_res + j]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&b| b).count() as f64 / self.mask.len() as f64
    }

    /// Cyclic shift along the angular axis: column `j` of the result is
    /// column `j - k` of `self`.
    pub fn shifted_columns(&self, k: isize) -> NormalizedIris {
        let a = self.angular_res;
        let mut texture = vec![0.0; self.texture.len()];
        let mut mask = vec![false; self.mask.len()];
        for i in 0..self.radial_res {
            for j in 0..a {
                let src = (j as isize - k).rem_euclid(a as isize) as usize;
                texture[i * a + j] = self.texture[i * a + src];
                mask[i * a + j] = self.mask[i * a + src];
            }
        }
        NormalizedIris {
            texture,
            mask,
            ..self.clone()
        }
    }

    /// Texture (0..255) and mask as two grayscale PNGs.
    pub fn write_debug(&self, texture_path: &Path, mask_path: &Path) -> Result<()> {
        let tex: Vec<u8> = self
            .texture
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let m: Vec<u8> = self.mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
        for (buf, path) in [(tex, texture_path), (m, mask_path)] {
            image::GrayImage::from_raw(self.angular_res as u32, self.radial_res as u32, buf)
                .expect("buffer size")
                .save(path)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        }
        Ok(())
    }
}

/// Daugman rubber sheet: for radius fraction `r = (i + 0.5) / radial_res`
/// and angle `theta = 2*pi*j / angular_res`, samples the image bilinearly at
/// `(1 - r) * P(theta) + r * L(theta)` where `P` and `L` are the points of
/// the pupil and limbus circles at `theta` about their own centres.
///
/// Texture is min-max normalized over valid samples (all zeros when the
/// valid samples are constant). Invalid samples hold the mean of the valid
/// ones so they stay neutral to the encoders' filters.
pub fn rubber_sheet(
    img: &EyeImage,
    seg: &SegmentationResult,
    radial_res: usize,
    angular_res: usize,
) -> Result<NormalizedIris> {
    let gray = img.gray()?;
    let (w, h) = (img.width(), img.height());
    if (seg.noise_mask.width(), seg.noise_mask.height()) != (w, h) {
        return Err(Error::ShapeMismatch(
            "segmentation mask does not match the image".into(),
        ));
    }
    if radial_res == 0 || angular_res == 0 {
        return Err(Error::InvalidParameter(
            "normalization resolution must be positive".into(),
        ));
    }
    let n = radial_res * angular_res;
    let mut raw = vec![0.0f64; n];
    let mut mask = vec![false; n];
    for j in 0..angular_res {
        let theta = 2.0 * PI * j as f64 / angular_res as f64;
        let (px, py) = seg.pupil.point_at(theta);
        let (lx, ly) = seg.limbus.point_at(theta);
        for i in 0..radial_res {
            let r = (i as f64 + 0.5) / radial_res as f64;
            let (x, y) = ((1.0 - r) * px + r * lx, (1.0 - r) * py + r * ly);
            let (value, valid) = bilinear(gray, w, h, &seg.noise_mask, x, y);
            raw[i * angular_res + j] = value;
            mask[i * angular_res + j] = valid;
        }
    }
    let valid = mask.iter().filter(|&&b| b).count();
    if (valid as f64) < MIN_VALID_FRACTION * n as f64 {
        return Err(Error::EmptyValidRegion { valid, total: n });
    }
    let (lo, hi) = raw
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let scale = |v: f64| {
        if span > 0.0 {
            ((v - lo) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let mean = raw
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| scale(v))
        .sum::<f64>()
        / valid as f64;
    let texture = raw
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { scale(v) as f32 } else { mean as f32 })
        .collect();
    NormalizedIris::new(radial_res, angular_res, texture, mask, img.meta.clone())
}

/// Bilinear sample; valid iff all four neighbours are inside the frame and
/// valid in `mask`.
fn bilinear(gray: &[u8], w: usize, h: usize, mask: &Mask, x: f64, y: f64) -> (f64, bool) {
    let (fx, fy) = (x.floor(), y.floor());
    if fx < 0.0 || fy < 0.0 || fx + 1.0 >= w as f64 || fy + 1.0 >= h as f64 {
        let cx = x.round().clamp(0.0, (w - 1) as f64) as usize;
        let cy = y.round().clamp(0.0, (h - 1) as f64) as usize;
        return (gray[cy * w + cx] as f64, false);
    }
    let (x0, y0) = (fx as usize, fy as usize);
    let (ax, ay) = (x - fx, y - fy);
    let p = |xx: usize, yy: usize| gray[yy * w + xx] as f64;
    let top = p(x0, y0) * (1.0 - ax) + p(x0 + 1, y0) * ax;
    let bot = p(x0, y0 + 1) * (1.0 - ax) + p(x0 + 1, y0 + 1) * ax;
    let valid = mask.get(x0, y0)
        && mask.get(x0 + 1, y0)
        && mask.get(x0, y0 + 1)
        && mask.get(x0 + 1, y0 + 1);
    (top * (1.0 - ay) + bot * ay, valid)
}
