//! Seeded generator of multispectral eye images with known geometry.
//!
//! Each synthetic iris is a texture field `T(theta, rho)` in `[0, 1]`
//! (smoothed noise plus radial fibre streaks). A render places that field
//! between a pupil and a limbus circle using the exact inverse of the
//! rubber-sheet mapping, scales it with a per (eye color, band) contrast and
//! base luminance, and adds sensor noise. Visible-light renders may carry a
//! saturated flash highlight.
//!
//! Melanin absorbs strongly in the visible range and barely at all in the
//! near infrared, and scattering grows towards short wavelengths; the
//! default [`SpectralContrastModel`] therefore orders texture contrast
//! NIR >= red >= green >= blue, with a much steeper fall-off for dark
//! irises than for blue ones.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{DatasetManifest, ManifestEntry};
use crate::imaging::{Band, EyeColor, EyeImage, EyeSide, SampleMeta, Spectrum};
use crate::segmentation::Circle;

/// Frame of NIR gallery images (portrait).
pub const NIR_FRAME: (usize, usize) = (480, 640);
/// Frame of visible-light probes after VGA cropping.
pub const VIS_FRAME: (usize, usize) = (640, 480);

/// Default eye color ratio (blue : green : brown/hazel).
pub const DEFAULT_COLOR_WEIGHTS: [(EyeColor, u32); 3] = [
    (EyeColor::Blue, 32),
    (EyeColor::Green, 18),
    (EyeColor::BrownHazel, 22),
];

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}

/// Iris texture on a polar grid; rows are radius fractions, columns angles.
#[derive(Debug, Clone, PartialEq)]
pub struct IrisTexture {
    radial: usize,
    angular: usize,
    values: Vec<f32>,
}

impl IrisTexture {
    pub const RADIAL: usize = 64;
    pub const ANGULAR: usize = 512;

    pub fn radial(&self) -> usize {
        self.radial
    }

    pub fn angular(&self) -> usize {
        self.angular
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Bilinear sample at angle `theta` (radians, periodic) and radius
    /// fraction `rho` (clamped to `[0, 1]`). Grid cell `(i, j)` sits at
    /// `rho = (i + 0.5) / radial`, `theta = 2*pi*j / angular`.
    pub fn sample(&self, theta: f64, rho: f64) -> f64 {
        let a = self.angular as f64;
        let u = (theta / (2.0 * PI) * a).rem_euclid(a);
        let v =
            (rho.clamp(0.0, 1.0) * self.radial as f64 - 0.5).clamp(0.0, (self.radial - 1) as f64);
        let (j0, i0) = (u.floor() as usize % self.angular, v.floor() as usize);
        let j1 = (j0 + 1) % self.angular;
        let i1 = (i0 + 1).min(self.radial - 1);
        let (fu, fv) = (u - u.floor(), v - v.floor());
        let at = |i: usize, j: usize| self.values[i * self.angular + j] as f64;
        let top = at(i0, j0) * (1.0 - fu) + at(i0, j1) * fu;
        let bot = at(i1, j0) * (1.0 - fu) + at(i1, j1) * fu;
        top * (1.0 - fv) + bot * fv
    }
}

/// Shape parameters of the identity texture model.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureModel {
    /// Gaussian smoothing of the noise layer, in grid cells.
    pub sigma_angular: f64,
    pub sigma_radial: f64,
    pub streaks: usize,
    pub streak_weight: f64,
    /// Standard deviation of `T - 0.5` before clamping.
    pub spread: f64,
}

impl Default for TextureModel {
    fn default() -> Self {
        Self {
            sigma_angular: 3.0,
            sigma_radial: 30.0,
            streaks: 30,
            streak_weight: 2.0,
            spread: 0.17,
        }
    }
}

fn smooth_cyclic_cols(values: &mut [f64], rows: usize, cols: usize, sigma: f64) {
    let k = gauss(sigma);
    let h = (k.len() / 2) as isize;
    let mut out = vec![0.0; values.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = k
                .iter()
                .enumerate()
                .map(|(t, w)| {
                    w * values[i * cols
                        + (j as isize + t as isize - h).rem_euclid(cols as isize) as usize]
                })
                .sum();
        }
    }
    values.copy_from_slice(&out);
}

fn smooth_clamped_rows(values: &mut [f64], rows: usize, cols: usize, sigma: f64) {
    let k = gauss(sigma);
    let h = (k.len() / 2) as isize;
    let mut out = vec![0.0; values.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = k
                .iter()
                .enumerate()
                .map(|(t, w)| {
                    w * values[(i as isize + t as isize - h).clamp(0, rows as isize - 1) as usize
                        * cols
                        + j]
                })
                .sum();
        }
    }
    values.copy_from_slice(&out);
}

fn gauss(sigma: f64) -> Vec<f64> {
    let h = (3.0 * sigma).ceil().max(1.0) as isize;
    let raw: Vec<f64> = (-h..=h)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-12);
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// Deterministic identity texture for `seed` with the default model.
pub fn generate_identity(seed: u64) -> IrisTexture {
    generate_identity_with(seed, &TextureModel::default())
}

pub fn generate_identity_with(seed: u64, model: &TextureModel) -> IrisTexture {
    let (rows, cols) = (IrisTexture::RADIAL, IrisTexture::ANGULAR);
    let mut rng = rng_for(&[seed, 0x7E47]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise: Vec<f64> = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
    smooth_cyclic_cols(&mut noise, rows, cols, model.sigma_angular);
    smooth_clamped_rows(&mut noise, rows, cols, model.sigma_radial);
    standardize(&mut noise);

    let mut streaks = vec![0.0f64; rows * cols];
    for _ in 0..model.streaks {
        let center = rng.random::<f64>() * cols as f64;
        let width: f64 = rng.random_range(0.8..2.5);
        let amp = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.5..1.5);
        let r0 = rng.random_range(0.0..0.6) * rows as f64;
        let len = rng.random_range(0.25..0.9) * rows as f64;
        let r1 = (r0 + len).min(rows as f64);
        let reach = (3.0 * width).ceil() as isize;
        for i in 0..rows {
            let fi = i as f64 + 0.5;
            // soft radial ends
            let w_r = ((fi - r0).min(r1 - fi) / 2.0).clamp(0.0, 1.0);
            if w_r == 0.0 {
                continue;
            }
            for dj in -reach..=reach {
                let j = (center.floor() as isize + dj).rem_euclid(cols as isize) as usize;
                let d = center.floor() + dj as f64 + 0.5 - center;
                streaks[i * cols + j] += amp * w_r * (-(d * d) / (2.0 * width * width)).exp();
            }
        }
    }
    standardize(&mut streaks);

    let mut field: Vec<f64> = noise
        .iter()
        .zip(&streaks)
        .map(|(n, s)| n + model.streak_weight * s)
        .collect();
    standardize(&mut field);
    let values = field
        .into_iter()
        .map(|z| (0.5 + model.spread * z).clamp(0.0, 1.0) as f32)
        .collect();
    IrisTexture {
        radial: rows,
        angular: cols,
        values,
    }
}

/// Per (eye color, band) texture contrast and base luminance, plus the
/// shared pupil / sclera levels and sensor noise. Luminances are fractions
/// of full scale; `noise_sigma` is in grey levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralContrastModel {
    pub contrast: BTreeMap<(EyeColor, Band), f64>,
    pub base_luminance: BTreeMap<(EyeColor, Band), f64>,
    pub sclera: BTreeMap<Band, f64>,
    pub pupil: f64,
    pub noise_sigma: f64,
}

/// Bands the contrast model is defined over.
pub const MODEL_BANDS: [Band; 4] = [Band::Nir, Band::Red, Band::Green, Band::Blue];

impl Default for SpectralContrastModel {
    fn default() -> Self {
        Self::parse(
            include_str!("../../../config/spectral_model.cfg"),
            "spectral_model.cfg",
        )
        .expect("shipped spectral model parses")
    }
}

impl SpectralContrastModel {
    pub fn contrast(&self, color: EyeColor, band: Band) -> f64 {
        self.contrast[&(color, band)]
    }

    pub fn base(&self, color: EyeColor, band: Band) -> f64 {
        self.base_luminance[&(color, band)]
    }

    /// Parses `contrast.<color>.<band> = x`, `base.<color>.<band> = x`,
    /// `sclera.<band> = x`, `pupil = x`, `noise_sigma = x`. Every
    /// (color, band) cell must be present.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut contrast = BTreeMap::new();
        let mut base = BTreeMap::new();
        let mut sclera = BTreeMap::new();
        let (mut pupil, mut noise) = (None, None);
        let band_of = |s: &str, line: usize| -> Result<Band> {
            match s {
                "nir" => Ok(Band::Nir),
                "red" => Ok(Band::Red),
                "green" => Ok(Band::Green),
                "blue" => Ok(Band::Blue),
                _ => Err(Error::parse(origin, line, format!("unknown band '{s}'"))),
            }
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected 'key = value'"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, "value is not a number"))?;
            let parts: Vec<&str> = key.trim().split('.').collect();
            match parts.as_slice() {
                ["contrast", c, b] | ["base", c, b] => {
                    let color: EyeColor = c.parse().map_err(|e| Error::parse(origin, n + 1, e))?;
                    let band = band_of(b, n + 1)?;
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::parse(origin, n + 1, "value must be in [0, 1]"));
                    }
                    let map = if parts[0] == "contrast" {
                        &mut contrast
                    } else {
                        &mut base
                    };
                    map.insert((color, band), value);
                }
                ["sclera", b] => {
                    sclera.insert(band_of(b, n + 1)?, value);
                }
                ["pupil"] => pupil = Some(value),
                ["noise_sigma"] => noise = Some(value),
                _ => {
                    return Err(Error::parse(
                        origin,
                        n + 1,
                        format!("unknown key '{}'", key.trim()),
                    ))
                }
            }
        }
        for color in EyeColor::ALL {
            for band in MODEL_BANDS {
                if !contrast.contains_key(&(color, band)) || !base.contains_key(&(color, band)) {
                    return Err(Error::parse(
                        origin,
                        0,
                        format!("missing cell {color}.{band}"),
                    ));
                }
            }
        }
        for band in MODEL_BANDS {
            if !sclera.contains_key(&band) {
                return Err(Error::parse(origin, 0, format!("missing sclera.{band}")));
            }
        }
        Ok(Self {
            contrast,
            base_luminance: base,
            sclera,
            pupil: pupil.ok_or_else(|| Error::parse(origin, 0, "missing pupil"))?,
            noise_sigma: noise.ok_or_else(|| Error::parse(origin, 0, "missing noise_sigma"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for color in EyeColor::ALL {
            for band in MODEL_BANDS {
                s.push_str(&format!(
                    "contrast.{color}.{band} = {}\n",
                    self.contrast(color, band)
                ));
                s.push_str(&format!(
                    "base.{color}.{band} = {}\n",
                    self.base(color, band)
                ));
            }
        }
        for band in MODEL_BANDS {
            s.push_str(&format!("sclera.{band} = {}\n", self.sclera[&band]));
        }
        s.push_str(&format!(
            "pupil = {}\nnoise_sigma = {}\n",
            self.pupil, self.noise_sigma
        ));
        s
    }
}

/// Geometry of one render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pupil: Circle,
    pub limbus: Circle,
    pub identity_seed: u64,
    /// Eye rotation in radians; positive turns the texture towards
    /// increasing angle.
    pub rotation: f64,
    pub highlight: Option<Circle>,
}

/// Maps an image point to rubber-sheet coordinates `(theta, rho)`; the
/// exact inverse of the forward mapping used by normalization.
fn polar_coords(pupil: &Circle, limbus: &Circle, x: f64, y: f64) -> (f64, f64) {
    let (wx, wy) = (x - pupil.cx, y - pupil.cy);
    let (dx, dy) = (limbus.cx - pupil.cx, limbus.cy - pupil.cy);
    let dr = limbus.r - pupil.r;
    let a = dx * dx + dy * dy - dr * dr;
    let b = -2.0 * (wx * dx + wy * dy + pupil.r * dr);
    let c = wx * wx + wy * wy - pupil.r * pupil.r;
    let rho = if a.abs() < 1e-12 {
        -c / b
    } else {
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let r1 = (-b + disc) / (2.0 * a);
        let r2 = (-b - disc) / (2.0 * a);
        // a < 0: the root giving a positive ring radius is the right one
        let ok = |r: f64| pupil.r + r * dr > 0.0;
        if ok(r1) && (!ok(r2) || (r1 - 0.5).abs() < (r2 - 0.5).abs()) {
            r1
        } else {
            r2
        }
    };
    let (ux, uy) = (wx - rho * dx, wy - rho * dy);
    (uy.atan2(ux), rho)
}

/// Renders one eye. `band` is `Nir`, `Rgb` (three planes) or a single
/// colour channel. `noise_seed` drives the sensor noise only.
#[allow(clippy::too_many_arguments)]
pub fn render_eye(
    texture: &IrisTexture,
    band: Band,
    eye_color: EyeColor,
    gt: &GroundTruth,
    model: &SpectralContrastModel,
    frame: (usize, usize),
    noise_seed: u64,
    meta: SampleMeta,
) -> Result<(EyeImage, GroundTruth)> {
    let (w, h) = frame;
    let fits = |c: &Circle| {
        c.cx - c.r >= 0.0 && c.cy - c.r >= 0.0 && c.cx + c.r < w as f64 && c.cy + c.r < h as f64
    };
    if !fits(&gt.limbus)
        || !fits(&gt.pupil)
        || gt.pupil.center_distance(&gt.limbus) + gt.pupil.r >= gt.limbus.r
    {
        return Err(Error::GeometryOutOfFrame {
            width: w,
            height: h,
        });
    }
    let bands: Vec<Band> = match band {
        Band::Rgb => vec![Band::Red, Band::Green, Band::Blue],
        b => vec![b],
    };
    let visible = band != Band::Nir;
    let mut rng = rng_for(&[noise_seed, 0x0015E]);
    let normal = Normal::new(0.0, model.noise_sigma.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    // texture value per pixel, shared by all planes
    let mut tex_at = vec![0.5f64; w * h];
    let reach = gt.limbus.r + 2.0;
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            if (fx - gt.limbus.cx).hypot(fy - gt.limbus.cy) > reach {
                continue;
            }
            let (theta, rho) = polar_coords(&gt.pupil, &gt.limbus, fx, fy);
            tex_at[y * w + x] = texture.sample(theta - gt.rotation, rho);
        }
    }

    let mut planes = Vec::with_capacity(bands.len());
    for b in bands {
        let base = model.base(eye_color, b);
        let contrast = model.contrast(eye_color, b);
        let sclera = model.sclera[&b];
        let mut plane = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let in_pupil =
                    (gt.pupil.r - (fx - gt.pupil.cx).hypot(fy - gt.pupil.cy) + 0.5).clamp(0.0, 1.0);
                let in_limbus = (gt.limbus.r - (fx - gt.limbus.cx).hypot(fy - gt.limbus.cy) + 0.5)
                    .clamp(0.0, 1.0);
                let iris = base + contrast * (tex_at[y * w + x] - 0.5);
                let v = in_pupil * model.pupil
                    + (1.0 - in_pupil) * (in_limbus * iris + (1.0 - in_limbus) * sclera);
                let noisy = v * 255.0 + normal.sample(&mut rng);
                plane[y * w + x] = noisy.round().clamp(0.0, 254.0) as u8;
            }
        }
        if visible {
            if let Some(hl) = &gt.highlight {
                for y in 0..h {
                    for x in 0..w {
                        if (x as f64 - hl.cx).hypot(y as f64 - hl.cy) <= hl.r {
                            plane[y * w + x] = 255;
                        }
                    }
                }
            }
        }
        planes.push(plane);
    }
    let img = EyeImage::new(w, h, planes, band, meta)?;
    Ok((img, gt.clone()))
}

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub subjects: usize,
    pub n_nir: usize,
    pub n_vis: usize,
    pub seed: u64,
    pub color_weights: [(EyeColor, u32); 3],
    pub model: SpectralContrastModel,
    pub texture: TextureModel,
    /// Relative pupil radius jitter (0.25 = +-25%).
    pub pupil_jitter: f64,
    /// Rotation jitter in degrees.
    pub rotation_jitter_deg: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            subjects: 20,
            n_nir: 6,
            n_vis: 3,
            seed: 7,
            color_weights: DEFAULT_COLOR_WEIGHTS,
            model: SpectralContrastModel::default(),
            texture: TextureModel::default(),
            pupil_jitter: 0.25,
            rotation_jitter_deg: 4.0,
        }
    }
}

/// Largest-remainder apportionment of `n` items over `weights`.
pub fn apportion(n: usize, weights: &[u32]) -> Vec<usize> {
    let total: u64 = weights.iter().map(|&w| w as u64).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|&w| (n as u64 * w as u64 / total) as usize)
        .collect();
    let mut rema: Vec<(u64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (n as u64 * w as u64 % total, i))
        .collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = counts.iter().sum();
    for &(_, i) in rema.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Per-iris geometry drawn once; renders jitter around it.
#[derive(Debug, Clone)]
pub struct IrisPlan {
    pub subject_id: String,
    pub eye_side: EyeSide,
    pub eye_color: EyeColor,
    pub identity_seed: u64,
    pub limbus_r: f64,
    pub limbus_offset: (f64, f64),
    pub pupil_r: f64,
}

pub fn plan_irises(spec: &DatasetSpec) -> Vec<IrisPlan> {
    let weights: Vec<u32> = spec.color_weights.iter().map(|&(_, w)| w).collect();
    let counts = apportion(spec.subjects, &weights);
    let mut colors: Vec<EyeColor> = spec
        .color_weights
        .iter()
        .zip(&counts)
        .flat_map(|(&(c, _), &n)| std::iter::repeat_n(c, n))
        .collect();
    // seeded Fisher-Yates so colour does not follow subject order
    let mut rng = rng_for(&[spec.seed, 0xC010]);
    for i in (1..colors.len()).rev() {
        let j = rng.random_range(0..=i);
        colors.swap(i, j);
    }
    let mut out = Vec::with_capacity(spec.subjects * 2);
    for (s, &color) in colors.iter().enumerate() {
        for (e, side) in [EyeSide::Left, EyeSide::Right].into_iter().enumerate() {
            let mut r = rng_for(&[spec.seed, 0x1215, s as u64, e as u64]);
            let limbus_r = r.random_range(100.0..120.0);
            out.push(IrisPlan {
                subject_id: format!("s{:03}", s + 1),
                eye_side: side,
                eye_color: color,
                identity_seed: mix_seed(&[spec.seed, 0x1D, s as u64, e as u64]),
                limbus_r,
                limbus_offset: (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)),
                pupil_r: limbus_r * r.random_range(0.32..0.40),
            });
        }
    }
    out
}

/// Draws the geometry of render `k` of an iris in the given frame.
pub fn jitter_geometry(
    spec: &DatasetSpec,
    plan: &IrisPlan,
    spectrum: Spectrum,
    k: usize,
) -> GroundTruth {
    let frame = match spectrum {
        Spectrum::Nir => NIR_FRAME,
        Spectrum::Vis => VIS_FRAME,
    };
    let mut r = rng_for(&[plan.identity_seed, 0x6E0, spectrum as u64, k as u64]);
    let pcx = frame.0 as f64 / 2.0 + r.random_range(-10.0..10.0);
    let pcy = frame.1 as f64 / 2.0 + r.random_range(-10.0..10.0);
    let pupil_r = plan.pupil_r * (1.0 + r.random_range(-spec.pupil_jitter..=spec.pupil_jitter));
    let rotation = r
        .random_range(-spec.rotation_jitter_deg..=spec.rotation_jitter_deg)
        .to_radians();
    let pupil = Circle::new(pcx, pcy, pupil_r);
    let limbus = Circle::new(
        pcx + plan.limbus_offset.0,
        pcy + plan.limbus_offset.1,
        plan.limbus_r,
    );
    let highlight = (spectrum == Spectrum::Vis).then(|| {
        let a = r.random_range(0.0..2.0 * PI);
        let d = r.random_range(0.0..0.8) * pupil_r;
        Circle::new(
            pcx + d * a.cos(),
            pcy + d * a.sin(),
            r.random_range(4.0..7.0),
        )
    });
    GroundTruth {
        pupil,
        limbus,
        identity_seed: plan.identity_seed,
        rotation,
        highlight,
    }
}

#[derive(Serialize)]
struct GroundTruthRecord<'a> {
    path: &'a str,
    #[serde(flatten)]
    gt: &'a GroundTruth,
}

/// Renders the whole dataset into `out_dir` (`nir/`, `vis/`,
/// `manifest.csv`, `groundtruth.jsonl`) and returns the manifest.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir.join("nir"))?;
    std::fs::create_dir_all(out_dir.join("vis"))?;
    let plans = plan_irises(spec);
    let mut jobs: Vec<(usize, Spectrum, usize)> = Vec::new();
    for (i, _) in plans.iter().enumerate() {
        jobs.extend((0..spec.n_nir).map(|k| (i, Spectrum::Nir, k)));
        jobs.extend((0..spec.n_vis).map(|k| (i, Spectrum::Vis, k)));
    }
    let textures: Vec<IrisTexture> = plans
        .par_iter()
        .map(|p| generate_identity_with(p.identity_seed, &spec.texture))
        .collect();
    let rendered: Vec<Result<(ManifestEntry, GroundTruth)>> = jobs
        .par_iter()
        .map(|&(i, spectrum, k)| {
            let plan = &plans[i];
            let rel = format!(
                "{}/{}_{}_{k}.png",
                spectrum.as_str(),
                plan.subject_id,
                plan.eye_side
            );
            let gt = jitter_geometry(spec, plan, spectrum, k);
            let (band, frame) = match spectrum {
                Spectrum::Nir => (Band::Nir, NIR_FRAME),
                Spectrum::Vis => (Band::Rgb, VIS_FRAME),
            };
            let meta = SampleMeta {
                subject_id: plan.subject_id.clone(),
                eye_side: plan.eye_side,
                eye_color: plan.eye_color,
                spectrum,
                source_path: rel.clone(),
            };
            let noise_seed = mix_seed(&[plan.identity_seed, 0x401, spectrum as u64, k as u64]);
            let (img, gt) = render_eye(
                &textures[i],
                band,
                plan.eye_color,
                &gt,
                &spec.model,
                frame,
                noise_seed,
                meta.clone(),
            )?;
            img.save(&out_dir.join(&rel))?;
            Ok((
                ManifestEntry {
                    meta,
                    path: PathBuf::from(rel),
                },
                gt,
            ))
        })
        .collect();
    let mut entries = Vec::with_capacity(rendered.len());
    let mut sidecar =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("groundtruth.jsonl"))?);
    for r in rendered {
        let (entry, gt) = r?;
        let rec = GroundTruthRecord {
            path: &entry.meta.source_path,
            gt: &gt,
        };
        serde_json::to_writer(&mut sidecar, &rec)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        sidecar.write_all(b"\n")?;
        entries.push(entry);
    }
    sidecar.flush()?;
    let manifest = DatasetManifest::new(entries, out_dir.to_path_buf())?;
    manifest.write_csv(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Reads `groundtruth.jsonl` into (relative path, ground truth) pairs.
pub fn read_ground_truth(path: &Path) -> Result<Vec<(String, GroundTruth)>> {
    #[derive(Deserialize)]
    struct Rec {
        path: String,
        #[serde(flatten)]
        gt: GroundTruth,
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str::<Rec>(l)
                .map(|r| (r.path, r.gt))
                .map_err(|e| Error::parse(path.display().to_string(), n + 1, e.to_string()))
        })
        .collect()
}
