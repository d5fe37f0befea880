//! Pupil and limbus localisation with an integro-differential circle search,
//! plus the validity mask over the iris annulus.
//!
//! The objective for a candidate circle family at centre `(cx, cy)` is the
//! Gaussian-smoothed radial derivative of the mean intensity along circles
//! of growing radius. The pupil is searched first over the whole frame; the
//! limbus is then searched near the pupil centre using only the left and
//! right 90 degree arcs so that eyelids do not bias the contour integral.
//! Both searches run on a stride-4 grid and are refined at stride 1.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::EyeImage;
use crate::raster::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    pub fn center_distance(&self, other: &Circle) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }

    /// Point on the circle at angle `theta` (image coordinates, y down).
    pub fn point_at(&self, theta: f64) -> (f64, f64) {
        (
            self.cx + self.r * theta.cos(),
            self.cy + self.r * theta.sin(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub pupil: Circle,
    pub limbus: Circle,
    /// `true` marks a valid iris pixel.
    pub noise_mask: Mask,
}

impl SegmentationResult {
    /// Checks containment and the radius ratio window.
    pub fn check_geometry(pupil: &Circle, limbus: &Circle) -> Result<()> {
        if pupil.r <= 0.0 || pupil.center_distance(limbus) + pupil.r >= limbus.r {
            return Err(Error::BoundaryOrderViolation);
        }
        let ratio = pupil.r / limbus.r;
        if !(0.15..=0.8).contains(&ratio) {
            return Err(Error::SegmentationFailed(format!(
                "pupil/limbus radius ratio {ratio:.3} outside [0.15, 0.8]"
            )));
        }
        Ok(())
    }

    /// Writes `cx cy r` for pupil then limbus, and the mask as a PNG.
    pub fn write_debug(&self, circles_path: &Path, mask_path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(circles_path)?;
        for c in [&self.pupil, &self.limbus] {
            writeln!(f, "{:.3} {:.3} {:.3}", c.cx, c.cy, c.r)?;
        }
        image::GrayImage::from_raw(
            self.noise_mask.width() as u32,
            self.noise_mask.height() as u32,
            self.noise_mask.to_bytes(),
        )
        .expect("mask buffer")
        .save(mask_path)
        .map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    /// Intensities at or above this are treated as specular highlights.
    pub specular_threshold: u8,
    pub specular_dilation: usize,
    pub pupil_radius: (usize, usize),
    pub limbus_min_radius: usize,
    pub limbus_max_radius: usize,
    /// Minimum limbus/pupil radius ratio used to start the limbus search.
    pub limbus_pupil_factor: f64,
    pub limbus_center_tolerance: usize,
    pub coarse_stride: usize,
    pub refine_radius: usize,
    /// Sigma of the Gaussian applied to the radial derivative, in radius steps.
    pub smoothing_sigma: f64,
    /// Minimum smoothed derivative (grey levels per pixel) for a boundary.
    pub confidence_floor: f64,
    /// Rows farther than this fraction of the limbus radius from its centre
    /// are cut as eyelid.
    pub eyelid_fraction: f64,
    pub coarse_samples: usize,
    pub fine_samples: usize,
    /// Number of distinct coarse maxima that get refined.
    pub refine_candidates: usize,
    /// When set, the pupil boundary is searched on `32 * ln(mean + offset)`
    /// instead of raw ring means, so a dark pupil outranks a brighter edge
    /// of similar height.
    pub pupil_log_offset: Option<f64>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            specular_threshold: 250,
            specular_dilation: 2,
            pupil_radius: (15, 90),
            limbus_min_radius: 50,
            limbus_max_radius: 220,
            limbus_pupil_factor: 1.25,
            limbus_center_tolerance: 15,
            coarse_stride: 4,
            refine_radius: 4,
            smoothing_sigma: 1.5,
            confidence_floor: 2.0,
            eyelid_fraction: 0.9,
            coarse_samples: 32,
            fine_samples: 96,
            refine_candidates: 3,
            pupil_log_offset: Some(4.0),
        }
    }
}

/// Marks saturated pixels and a disk of radius `dilation` around each as
/// invalid. Returns `true` for valid pixels.
pub fn specular_mask(img: &EyeImage) -> Result<Mask> {
    let cfg = SegmentationConfig::default();
    specular_mask_with(img, cfg.specular_threshold, cfg.specular_dilation)
}

pub fn specular_mask_with(img: &EyeImage, threshold: u8, dilation: usize) -> Result<Mask> {
    let gray = img.gray()?;
    let (w, h) = (img.width(), img.height());
    let mut mask = Mask::filled(w, h, true);
    let d = dilation as isize;
    let disk: Vec<(isize, isize)> = (-d..=d)
        .flat_map(|dy| (-d..=d).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= d * d)
        .collect();
    for y in 0..h {
        for x in 0..w {
            if gray[y * w + x] < threshold {
                continue;
            }
            for &(dx, dy) in &disk {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    mask.set(nx as usize, ny as usize, false);
                }
            }
        }
    }
    Ok(mask)
}

/// Which parts of each circle contribute to the contour integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arcs {
    Full,
    /// Left and right 90 degree arcs, centred on the horizontal axis.
    Sides,
}

/// Bilinear sample offsets for every radius of a search, relative to an
/// integer centre.
struct RingTable {
    r_lo: usize,
    rings: Vec<Vec<Tap>>,
}

#[derive(Clone, Copy)]
struct Tap {
    ix: isize,
    iy: isize,
    fx: f32,
    fy: f32,
}

impl RingTable {
    fn new(r_lo: usize, r_hi: usize, samples: usize, arcs: Arcs) -> Self {
        let angles: Vec<f64> = match arcs {
            Arcs::Full => (0..samples)
                .map(|k| 2.0 * PI * k as f64 / samples as f64)
                .collect(),
            Arcs::Sides => {
                let half = samples / 2;
                let mut a = Vec::with_capacity(samples);
                for side in [0.0, PI] {
                    for k in 0..half {
                        let t = (k as f64 + 0.5) / half as f64;
                        a.push(side - PI / 4.0 + t * PI / 2.0);
                    }
                }
                a
            }
        };
        let rings = (r_lo..=r_hi)
            .map(|r| {
                angles
                    .iter()
                    .map(|&t| {
                        let (x, y) = (r as f64 * t.cos(), r as f64 * t.sin());
                        let (ix, iy) = (x.floor(), y.floor());
                        Tap {
                            ix: ix as isize,
                            iy: iy as isize,
                            fx: (x - ix) as f32,
                            fy: (y - iy) as f32,
                        }
                    })
                    .collect()
            })
            .collect();
        Self { r_lo, rings }
    }
}

/// Float copy of the image with specular pixels flagged.
struct SearchImage<'a> {
    w: usize,
    h: usize,
    pix: Vec<f32>,
    usable: &'a Mask,
}

impl SearchImage<'_> {
    /// Mean intensity on one ring, or `None` when fewer than half of its
    /// samples are inside the frame and free of highlights.
    fn ring_mean(&self, cx: usize, cy: usize, ring: &[Tap]) -> Option<f64> {
        let mut sum = 0.0f32;
        let mut n = 0usize;
        for t in ring {
            let x = cx as isize + t.ix;
            let y = cy as isize + t.iy;
            if x < 0 || y < 0 || x + 1 >= self.w as isize || y + 1 >= self.h as isize {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if !(self.usable.get(x, y)
                && self.usable.get(x + 1, y)
                && self.usable.get(x, y + 1)
                && self.usable.get(x + 1, y + 1))
            {
                continue;
            }
            let i = y * self.w + x;
            let top = self.pix[i] + t.fx * (self.pix[i + 1] - self.pix[i]);
            let bot =
                self.pix[i + self.w] + t.fx * (self.pix[i + self.w + 1] - self.pix[i + self.w]);
            sum += top + t.fy * (bot - top);
            n += 1;
        }
        (2 * n >= ring.len() && n > 0).then(|| sum as f64 / n as f64)
    }
}

/// Best boundary for one centre: (objective, radius with sub-pixel offset).
#[allow(clippy::too_many_arguments)]
fn best_radius(
    img: &SearchImage,
    table: &RingTable,
    cx: usize,
    cy: usize,
    r_min: usize,
    r_max: usize,
    kernel: &[f64],
    log_offset: Option<f64>,
) -> Option<(f64, usize, f64)> {
    let half = kernel.len() / 2;
    // profile covers [r_min - half - 1, r_max + half + 1]
    let lo = r_min.checked_sub(half + 1)?.max(table.r_lo);
    let hi = r_max + half + 1;
    if lo + 2 * half + 2 > hi || hi >= table.r_lo + table.rings.len() {
        return None;
    }
    let mut profile = Vec::with_capacity(hi - lo + 1);
    for r in lo..=hi {
        match img.ring_mean(cx, cy, &table.rings[r - table.r_lo]) {
            Some(m) => profile.push(match log_offset {
                Some(c) => 32.0 * (m + c).ln(),
                None => m,
            }),
            None => break,
        }
    }
    if profile.len() < 2 * half + 3 {
        return None;
    }
    // central difference; deriv[k] belongs to radius lo + k + 1
    let deriv: Vec<f64> = profile.windows(3).map(|w| 0.5 * (w[2] - w[0])).collect();
    let mut smooth = vec![f64::NAN; deriv.len()];
    for k in half..deriv.len().saturating_sub(half) {
        smooth[k] = kernel
            .iter()
            .enumerate()
            .map(|(j, g)| g * deriv[k + j - half])
            .sum();
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for k in 0..smooth.len() {
        let r = lo + k + 1;
        if r < r_min || r > r_max || smooth[k].is_nan() {
            continue;
        }
        if best.is_none_or(|(s, _, _)| smooth[k] > s) {
            let frac = if k > 0
                && k + 1 < smooth.len()
                && !smooth[k - 1].is_nan()
                && !smooth[k + 1].is_nan()
            {
                let (a, b, c) = (smooth[k - 1], smooth[k], smooth[k + 1]);
                let den = a - 2.0 * b + c;
                if den < 0.0 {
                    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            best = Some((smooth[k], r, frac));
        }
    }
    best
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil().max(1.0) as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    cx: usize,
    cy: usize,
    r: usize,
    frac: f64,
}

impl Candidate {
    /// Higher score wins; ties go to the lowest (cy, cx, r).
    fn beats(&self, other: &Candidate) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        (self.cy, self.cx, self.r) < (other.cy, other.cx, other.r)
    }

    fn circle(&self) -> Circle {
        Circle::new(self.cx as f64, self.cy as f64, self.r as f64 + self.frac)
    }
}

fn pick_best(cands: impl Iterator<Item = Candidate>) -> Option<Candidate> {
    cands.fold(None, |acc, c| match acc {
        Some(a) if !c.beats(&a) => Some(a),
        _ => Some(c),
    })
}

struct Search<'a> {
    img: &'a SearchImage<'a>,
    coarse: RingTable,
    fine: RingTable,
    kernel: &'a [f64],
    r_min: usize,
    r_max: usize,
    log_offset: Option<f64>,
    /// Circle every candidate must enclose with a 2 px margin.
    contain: Option<Circle>,
}

impl Search<'_> {
    fn eval(&self, table: &RingTable, cx: usize, cy: usize) -> Option<Candidate> {
        let r_min = match &self.contain {
            Some(c) => {
                let d = (cx as f64 - c.cx).hypot(cy as f64 - c.cy);
                self.r_min.max((d + c.r + 2.0).ceil() as usize)
            }
            None => self.r_min,
        };
        if r_min > self.r_max {
            return None;
        }
        best_radius(
            self.img,
            table,
            cx,
            cy,
            r_min,
            self.r_max,
            self.kernel,
            self.log_offset,
        )
        .map(|(score, r, frac)| Candidate {
            score,
            cx,
            cy,
            r,
            frac,
        })
    }

    /// Coarse grid over `centers`, then stride-1 refinement around the best
    /// few distinct coarse maxima.
    /// Refinement only visits centres accepted by `allowed`.
    fn run(
        &self,
        centers: &[(usize, usize)],
        refine: usize,
        keep: usize,
        sep: usize,
        allowed: &(dyn Fn(usize, usize) -> bool + Sync),
    ) -> Option<Candidate> {
        let mut coarse: Vec<Candidate> = centers
            .par_iter()
            .filter_map(|&(cx, cy)| self.eval(&self.coarse, cx, cy))
            .collect();
        coarse.sort_by(|a, b| {
            if a.beats(b) {
                std::cmp::Ordering::Less
            } else if b.beats(a) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        let mut seeds: Vec<Candidate> = Vec::new();
        for c in coarse {
            if seeds.len() == keep {
                break;
            }
            if seeds
                .iter()
                .all(|s| s.cx.abs_diff(c.cx) > sep || s.cy.abs_diff(c.cy) > sep)
            {
                seeds.push(c);
            }
        }
        let refined: Vec<Candidate> = seeds
            .iter()
            .flat_map(|s| {
                let (x0, y0) = (s.cx.saturating_sub(refine), s.cy.saturating_sub(refine));
                (y0..=s.cy + refine).flat_map(move |y| (x0..=s.cx + refine).map(move |x| (x, y)))
            })
            .collect::<Vec<_>>()
            .par_iter()
            .filter_map(|&(cx, cy)| {
                (cx < self.img.w && cy < self.img.h && allowed(cx, cy))
                    .then(|| self.eval(&self.fine, cx, cy))
                    .flatten()
            })
            .collect();
        pick_best(refined.into_iter())
    }
}

/// Locates pupil and limbus with the default configuration.
pub fn segment_iris(img: &EyeImage) -> Result<SegmentationResult> {
    segment_iris_with(img, &SegmentationConfig::default())
}

pub fn segment_iris_with(img: &EyeImage, cfg: &SegmentationConfig) -> Result<SegmentationResult> {
    let gray = img.gray()?;
    let (w, h) = (img.width(), img.height());
    if w < 200 || h < 200 {
        return Err(Error::SegmentationFailed(format!(
            "image {w}x{h} is smaller than 200x200"
        )));
    }
    let usable = specular_mask_with(img, cfg.specular_threshold, cfg.specular_dilation)?;
    let search = SearchImage {
        w,
        h,
        pix: gray.iter().map(|&v| v as f32).collect(),
        usable: &usable,
    };
    let kernel = gaussian_kernel(cfg.smoothing_sigma);
    let margin = kernel.len() / 2 + 2;

    // pupil
    let (p_lo, p_hi) = cfg.pupil_radius;
    let table_lo = p_lo.saturating_sub(margin).max(1);
    let table_hi = p_hi + margin;
    let pupil_search = Search {
        img: &search,
        coarse: RingTable::new(table_lo, table_hi, cfg.coarse_samples, Arcs::Full),
        fine: RingTable::new(table_lo, table_hi, cfg.fine_samples, Arcs::Full),
        kernel: &kernel,
        r_min: p_lo,
        r_max: p_hi,
        log_offset: cfg.pupil_log_offset,
        contain: None,
    };
    let stride = cfg.coarse_stride.max(1);
    let edge = p_lo;
    let centers: Vec<(usize, usize)> = (edge..h.saturating_sub(edge))
        .step_by(stride)
        .flat_map(|y| {
            (edge..w.saturating_sub(edge))
                .step_by(stride)
                .map(move |x| (x, y))
        })
        .collect();
    let pupil = pupil_search
        .run(
            &centers,
            cfg.refine_radius,
            cfg.refine_candidates,
            2 * stride,
            &|_, _| true,
        )
        .ok_or_else(|| Error::SegmentationFailed("no pupil candidate".into()))?;
    if pupil.score < cfg.confidence_floor {
        return Err(Error::SegmentationFailed(format!(
            "pupil boundary strength {:.2} below floor {:.2}",
            pupil.score, cfg.confidence_floor
        )));
    }
    let pupil_circle = pupil.circle();

    // limbus
    let l_lo =
        ((cfg.limbus_pupil_factor * pupil_circle.r).ceil() as usize).max(cfg.limbus_min_radius);
    let l_hi = cfg.limbus_max_radius;
    if l_lo > l_hi {
        return Err(Error::SegmentationFailed(
            "no admissible limbus radius".into(),
        ));
    }
    let limbus_search = Search {
        img: &search,
        coarse: RingTable::new(
            l_lo.saturating_sub(margin).max(1),
            l_hi + margin,
            cfg.coarse_samples,
            Arcs::Sides,
        ),
        fine: RingTable::new(
            l_lo.saturating_sub(margin).max(1),
            l_hi + margin,
            cfg.fine_samples,
            Arcs::Sides,
        ),
        kernel: &kernel,
        r_min: l_lo,
        r_max: l_hi,
        log_offset: None,
        contain: Some(pupil_circle),
    };
    let tol = cfg.limbus_center_tolerance as isize;
    let near: Vec<(usize, usize)> = (-tol..=tol)
        .step_by(stride)
        .flat_map(|dy| (-tol..=tol).step_by(stride).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= tol * tol)
        .filter_map(|(dx, dy)| {
            let x = pupil.cx as isize + dx;
            let y = pupil.cy as isize + dy;
            (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
                .then_some((x as usize, y as usize))
        })
        .collect();
    let limbus = limbus_search
        .run(
            &near,
            cfg.refine_radius,
            cfg.refine_candidates,
            stride,
            &|x, y| {
                let d2 = (x as isize - pupil.cx as isize).pow(2)
                    + (y as isize - pupil.cy as isize).pow(2);
                d2 <= tol * tol
            },
        )
        .ok_or_else(|| Error::SegmentationFailed("no limbus candidate".into()))?;
    if limbus.score < cfg.confidence_floor {
        return Err(Error::SegmentationFailed(format!(
            "limbus boundary strength {:.2} below floor {:.2}",
            limbus.score, cfg.confidence_floor
        )));
    }
    let limbus_circle = limbus.circle();
    SegmentationResult::check_geometry(&pupil_circle, &limbus_circle)?;

    let noise_mask = build_noise_mask(&pupil_circle, &limbus_circle, &usable, cfg.eyelid_fraction);
    Ok(SegmentationResult {
        pupil: pupil_circle,
        limbus: limbus_circle,
        noise_mask,
    })
}

/// Annulus between the circles, minus highlights and the eyelid bands.
pub fn build_noise_mask(
    pupil: &Circle,
    limbus: &Circle,
    usable: &Mask,
    eyelid_fraction: f64,
) -> Mask {
    let (w, h) = (usable.width(), usable.height());
    let band = eyelid_fraction * limbus.r;
    let mut bits = vec![false; w * h];
    for y in 0..h {
        let fy = y as f64;
        if (fy - limbus.cy).abs() > band {
            continue;
        }
        for x in 0..w {
            let fx = x as f64;
            let in_annulus = (fx - pupil.cx).hypot(fy - pupil.cy) > pupil.r
                && (fx - limbus.cx).hypot(fy - limbus.cy) < limbus.r;
            bits[y * w + x] = in_annulus && usable.get(x, y);
        }
    }
    Mask::from_vec(w, h, bits)
}
