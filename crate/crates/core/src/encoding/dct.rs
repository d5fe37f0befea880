use std::f64::consts::PI;

use super::{digest_of, EncoderId, EncoderParams, IrisCode, DEFAULT_OCCLUSION_THRESHOLD};
use crate::error::{Error, Result};
use crate::normalization::NormalizedIris;

/// How a patch is reduced to coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DctVariant {
    /// Average the patch rows into one angular signal, then a 1-D DCT.
    RowAverage,
    /// Full 2-D DCT; coefficients taken in zig-zag order after DC.
    Full2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DctPatchParams {
    /// Patch extent along the angular axis.
    pub patch_w: usize,
    /// Patch extent along the radial axis.
    pub patch_h: usize,
    pub overlap: f64,
    pub coeffs_kept: usize,
    /// Texture columns between consecutive code columns. Equal to the
    /// angular stride this is the plain tiled code; smaller steps sample the
    /// same patch-difference code densely, so that one column shift is a
    /// finer rotation.
    pub angular_step: usize,
    pub variant: DctVariant,
    pub occlusion_threshold: f64,
}

impl Default for DctPatchParams {
    fn default() -> Self {
        Self {
            patch_w: 16,
            patch_h: 8,
            overlap: 0.5,
            coeffs_kept: 8,
            angular_step: 1,
            variant: DctVariant::RowAverage,
            occlusion_threshold: DEFAULT_OCCLUSION_THRESHOLD,
        }
    }
}

fn exact_stride(patch: usize, overlap: f64) -> Option<usize> {
    let s = patch as f64 * (1.0 - overlap);
    let r = s.round();
    ((s - r).abs() < 1e-9 && r >= 1.0).then_some(r as usize)
}

impl DctPatchParams {
    pub fn strides(&self) -> Result<(usize, usize)> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidParameter(format!(
                "overlap {} not in [0, 1)",
                self.overlap
            )));
        }
        match (
            exact_stride(self.patch_h, self.overlap),
            exact_stride(self.patch_w, self.overlap),
        ) {
            (Some(h), Some(w)) => Ok((h, w)),
            _ => Err(Error::InvalidParameter(
                "patch size times (1 - overlap) must be a positive integer".into(),
            )),
        }
    }

    pub fn validate(&self, radial_res: usize, angular_res: usize) -> Result<()> {
        if self.patch_w < 2 || self.patch_h == 0 {
            return Err(Error::InvalidParameter("patch too small".into()));
        }
        let max_coeffs = match self.variant {
            DctVariant::RowAverage => self.patch_w - 1,
            DctVariant::Full2d => self.patch_w * self.patch_h - 1,
        };
        if self.coeffs_kept == 0 || self.coeffs_kept > self.patch_w || self.coeffs_kept > max_coeffs
        {
            return Err(Error::InvalidParameter(format!(
                "coeffs_kept {} out of range",
                self.coeffs_kept
            )));
        }
        let (_, sw) = self.strides()?;
        if self.patch_h > radial_res
            || self.patch_w > angular_res
            || !angular_res.is_multiple_of(sw)
        {
            return Err(Error::ShapeMismatch(format!(
                "patches {}x{} (angular stride {sw}) do not tile texture {radial_res}x{angular_res}",
                self.patch_h, self.patch_w
            )));
        }
        if self.angular_step == 0 || !angular_res.is_multiple_of(self.angular_step) {
            return Err(Error::ShapeMismatch(format!(
                "angular step {} does not divide {angular_res}",
                self.angular_step
            )));
        }
        Ok(())
    }

    /// `(radial patch count, code column count)`.
    pub fn patch_grid(&self, radial_res: usize, angular_res: usize) -> Result<(usize, usize)> {
        let (sh, _) = self.strides()?;
        Ok((
            (radial_res - self.patch_h) / sh + 1,
            angular_res / self.angular_step.max(1),
        ))
    }

    pub fn code_shape(&self, radial_res: usize, angular_res: usize) -> Result<(usize, usize)> {
        let (pr, pa) = self.patch_grid(radial_res, angular_res)?;
        Ok((pr * self.coeffs_kept, pa))
    }

    pub(crate) fn canonical(&self, radial_res: usize, angular_res: usize) -> String {
        format!(
            "dct;tex={radial_res}x{angular_res};patch={}x{};overlap={};coeffs={};step={};variant={:?};occl={}",
            self.patch_h,
            self.patch_w,
            self.overlap,
            self.coeffs_kept,
            self.angular_step,
            self.variant,
            self.occlusion_threshold
        )
    }

    pub fn digest(&self, radial_res: usize, angular_res: usize) -> String {
        digest_of(&self.canonical(radial_res, angular_res))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn dct_basis(len: usize) -> Vec<Vec<f64>> {
    (0..len)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / len as f64).sqrt()
            } else {
                (2.0 / len as f64).sqrt()
            };
            (0..len)
                .map(|n| scale * (PI * (n as f64 + 0.5) * k as f64 / len as f64).cos())
                .collect()
        })
        .collect()
}

/// Zig-zag order of a `h x w` coefficient block, DC first.
fn zigzag(h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(h * w);
    for d in 0..h + w - 1 {
        let mut diag: Vec<(usize, usize)> = (0..=d)
            .filter(|&u| u < h && d - u < w)
            .map(|u| (u, d - u))
            .collect();
        if d % 2 == 0 {
            diag.reverse();
        }
        out.extend(diag);
    }
    out
}

/// DCT patch code.
///
/// The texture is covered with overlapping `patch_h x patch_w` patches
/// (cyclic along the angle). Each patch yields `coeffs_kept` AC
/// coefficients; bit `(patch_row * coeffs_kept + k - 1, c)` is set when
/// coefficient `k` grows from the patch starting at column
/// `c * angular_step` to its angular neighbour one stride further
/// (cyclically). A zero difference maps to 0. Patches with more than
/// `occlusion_threshold` invalid pixels are invalid; a bit is valid when both
/// of its patches are.
pub fn encode_dct(n: &NormalizedIris, p: &DctPatchParams) -> Result<IrisCode> {
    let (rr, ar) = (n.radial_res(), n.angular_res());
    p.validate(rr, ar)?;
    let (sh, sw) = p.strides()?;
    let (n_pr, n_cols) = p.patch_grid(rr, ar)?;
    let kept = p.coeffs_kept;
    let digest = digest_of(&EncoderParams::Dct(p.clone()).canonical(rr, ar));
    let mut code = IrisCode::new(n_pr * kept, n_cols, EncoderId::Dct, digest);
    // patches start at every column the code needs: multiples of gcd(step, stride)
    let unit = gcd(p.angular_step, sw);
    let n_pa = ar / unit;
    let tex = n.texture();
    let mask = n.mask();
    let basis_w = dct_basis(p.patch_w);
    let basis_h = dct_basis(p.patch_h);
    let order: Vec<(usize, usize)> = zigzag(p.patch_h, p.patch_w)
        .into_iter()
        .skip(1)
        .take(kept)
        .collect();
    let patch_px = (p.patch_w * p.patch_h) as f64;

    let mut coeffs = vec![0.0f64; n_pa * kept];
    let mut valid = vec![false; n_pa];
    let mut block = vec![0.0f64; p.patch_h * p.patch_w];
    for pr in 0..n_pr {
        let i0 = pr * sh;
        for pa in 0..n_pa {
            let j0 = pa * unit;
            let mut bad = 0usize;
            for di in 0..p.patch_h {
                let row = (i0 + di) * ar;
                for dj in 0..p.patch_w {
                    let idx = row + (j0 + dj) % ar;
                    block[di * p.patch_w + dj] = tex[idx] as f64;
                    bad += usize::from(!mask[idx]);
                }
            }
            valid[pa] = bad as f64 <= p.occlusion_threshold * patch_px;
            let out = &mut coeffs[pa * kept..(pa + 1) * kept];
            match p.variant {
                DctVariant::RowAverage => {
                    let signal: Vec<f64> = (0..p.patch_w)
                        .map(|dj| {
                            (0..p.patch_h)
                                .map(|di| block[di * p.patch_w + dj])
                                .sum::<f64>()
                                / p.patch_h as f64
                        })
                        .collect();
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = basis_w[k + 1].iter().zip(&signal).map(|(b, x)| b * x).sum();
                    }
                }
                DctVariant::Full2d => {
                    for (o, &(u, v)) in out.iter_mut().zip(&order) {
                        let mut acc = 0.0;
                        for di in 0..p.patch_h {
                            let bu = basis_h[u][di];
                            for dj in 0..p.patch_w {
                                acc += bu * basis_w[v][dj] * block[di * p.patch_w + dj];
                            }
                        }
                        *o = acc;
                    }
                }
            }
        }
        for c in 0..n_cols {
            let pa = c * p.angular_step / unit;
            let next = (pa + sw / unit) % n_pa;
            let ok = valid[pa] && valid[next];
            for k in 0..kept {
                let diff = coeffs[next * kept + k] - coeffs[pa * kept + k];
                code.set(pr * kept + k, c, diff > 0.0, ok);
            }
        }
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{EyeColor, EyeSide, SampleMeta, Spectrum};

    fn meta() -> SampleMeta {
        SampleMeta {
            subject_id: "d".into(),
            eye_side: EyeSide::Left,
            eye_color: EyeColor::Blue,
            spectrum: Spectrum::Nir,
            source_path: String::new(),
        }
    }

    fn tiled() -> DctPatchParams {
        DctPatchParams {
            angular_step: 8,
            ..Default::default()
        }
    }

    fn texture(f: impl Fn(usize, usize) -> f32) -> NormalizedIris {
        let tex = (0..64)
            .flat_map(|i| (0..512).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        NormalizedIris::new(64, 512, tex, vec![true; 64 * 512], meta()).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = dct_basis(16);
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_texture_gives_zero_bits() {
        let code = encode_dct(&texture(|_, _| 0.4), &tiled()).unwrap();
        assert_eq!((code.rows(), code.cols()), (15 * 8, 64));
        assert_eq!(code.valid_count(), code.len());
        assert!(code.bit_words().iter().all(|&w| w == 0));
    }

    #[test]
    fn identical_textures_identical_codes() {
        let f = |i: usize, j: usize| ((i * 13 + j * 7) % 17) as f32 / 17.0;
        let p = DctPatchParams::default();
        assert_eq!(
            encode_dct(&texture(f), &p).unwrap(),
            encode_dct(&texture(f), &p).unwrap()
        );
    }

    #[test]
    fn stride_shift_is_one_column() {
        let f = |i: usize, j: usize| (((i * 7919) ^ (j * 104729)) % 251) as f32 / 251.0;
        let n = texture(f);
        let p = tiled();
        let a = encode_dct(&n, &p).unwrap();
        let b = encode_dct(&n.shifted_columns(8), &p).unwrap();
        assert_eq!(a.shifted(1), b);
        let d = DctPatchParams::default();
        let a = encode_dct(&n, &d).unwrap();
        let b = encode_dct(&n.shifted_columns(3), &d).unwrap();
        assert_eq!(a.shifted(3), b);
    }

    #[test]
    fn dense_code_contains_tiled_code() {
        let f = |i: usize, j: usize| (((i * 31) ^ (j * 7)) % 97) as f32 / 97.0;
        let n = texture(f);
        let tiled = encode_dct(&n, &tiled()).unwrap();
        let dense = encode_dct(&n, &DctPatchParams::default()).unwrap();
        assert_eq!(dense.cols(), 512);
        for r in 0..tiled.rows() {
            for c in 0..tiled.cols() {
                assert_eq!(tiled.bit(r, c), dense.bit(r, 8 * c));
                assert_eq!(tiled.is_valid(r, c), dense.is_valid(r, 8 * c));
            }
        }
    }

    #[test]
    fn occluded_patches_invalidate_both_neighbours() {
        let mut n = texture(|i, j| ((i + j) % 5) as f32 / 5.0);
        // knock out angular columns 16..24 over the first radial patch
        for i in 0..8 {
            for j in 16..24 {
                n.mask_mut()[i * 512 + j] = false;
            }
        }
        let code = encode_dct(&n, &tiled()).unwrap();
        // patches 1 (8..24) and 2 (16..32) are half covered -> invalid
        for k in 0..8 {
            for c in 0..64 {
                let expect = !(0..=2).contains(&c);
                assert_eq!(code.is_valid(k, c), expect, "k {k} c {c}");
            }
        }
    }

    #[test]
    fn full_2d_variant_runs() {
        let p = DctPatchParams {
            variant: DctVariant::Full2d,
            ..Default::default()
        };
        let code = encode_dct(&texture(|i, j| ((i * j) % 11) as f32 / 11.0), &p).unwrap();
        assert_eq!(code.rows(), 120);
        assert_ne!(p.digest(64, 512), DctPatchParams::default().digest(64, 512));
    }

    #[test]
    fn bad_params_rejected() {
        let n = texture(|_, _| 0.0);
        for p in [
            DctPatchParams {
                overlap: 1.0,
                ..Default::default()
            },
            DctPatchParams {
                overlap: 0.3,
                ..Default::default()
            },
            DctPatchParams {
                coeffs_kept: 17,
                ..Default::default()
            },
            DctPatchParams {
                patch_w: 24,
                overlap: 0.5,
                ..Default::default()
            },
            DctPatchParams {
                angular_step: 3,
                ..Default::default()
            },
        ] {
            assert!(encode_dct(&n, &p).is_err(), "{p:?}");
        }
    }
}
