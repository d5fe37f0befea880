use std::f64::consts::PI;

use super::{digest_of, EncoderId, EncoderParams, IrisCode, DEFAULT_OCCLUSION_THRESHOLD};
use crate::error::{Error, Result};
use crate::normalization::NormalizedIris;

/// Bank of complex 2-D Gabor filters with a carrier along the angular axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborBankParams {
    /// `(wavelength, envelope sigma)` pairs in texture pixels.
    pub scales: Vec<(f64, f64)>,
    /// `(radial step, angular step)` between sampled filter positions.
    pub sample_grid: (usize, usize),
    pub occlusion_threshold: f64,
}

impl Default for GaborBankParams {
    fn default() -> Self {
        Self {
            scales: vec![(8.0, 3.0), (16.0, 6.0), (32.0, 12.0)],
            sample_grid: (8, 1),
            occlusion_threshold: DEFAULT_OCCLUSION_THRESHOLD,
        }
    }
}

impl GaborBankParams {
    pub fn validate(&self, radial_res: usize, angular_res: usize) -> Result<()> {
        let (gr, ga) = self.sample_grid;
        if self.scales.is_empty() || self.scales.iter().any(|&(l, s)| !(l > 0.0 && s > 0.0)) {
            return Err(Error::InvalidParameter(
                "gabor scales need positive wavelength and sigma".into(),
            ));
        }
        if gr == 0 || ga == 0 || !radial_res.is_multiple_of(gr) || !angular_res.is_multiple_of(ga) {
            return Err(Error::ShapeMismatch(format!(
                "sample grid {gr}x{ga} does not divide texture {radial_res}x{angular_res}"
            )));
        }
        Ok(())
    }

    /// `(rows, cols)` of the produced code.
    pub fn code_shape(&self, radial_res: usize, angular_res: usize) -> (usize, usize) {
        (
            radial_res / self.sample_grid.0 * self.scales.len() * 2,
            angular_res / self.sample_grid.1,
        )
    }

    pub(crate) fn canonical(&self, radial_res: usize, angular_res: usize) -> String {
        let scales: Vec<String> = self
            .scales
            .iter()
            .map(|(l, s)| format!("{l}:{s}"))
            .collect();
        format!(
            "gabor;tex={radial_res}x{angular_res};scales={};grid={}x{};occl={}",
            scales.join(","),
            self.sample_grid.0,
            self.sample_grid.1,
            self.occlusion_threshold
        )
    }

    pub fn digest(&self, radial_res: usize, angular_res: usize) -> String {
        digest_of(&self.canonical(radial_res, angular_res))
    }
}

/// Phase-quantizes the responses of the Gabor bank.
///
/// Every grid point and scale contributes two bits, `Re > 0` and `Im > 0`
/// (zero maps to 0). Code row `(g * scales + s) * 2 + part` holds radial
/// grid row `g`, scale `s`, `part` 0 for the real and 1 for the imaginary
/// bit; columns are angular grid positions.
///
/// The envelope is a circular Gaussian; the real kernel has its
/// envelope-weighted mean removed so a constant offset in the texture does
/// not change any bit. The window is cyclic along the angle and truncated
/// at the inner and outer texture rows. A bit pair is masked when more than
/// `occlusion_threshold` of the squared-envelope weight falls on invalid
/// texture samples. Bit values never depend on the mask.
pub fn encode_gabor(n: &NormalizedIris, p: &GaborBankParams) -> Result<IrisCode> {
    let (rr, ar) = (n.radial_res(), n.angular_res());
    p.validate(rr, ar)?;
    let (gr, ga) = p.sample_grid;
    let n_rows = rr / gr;
    let n_cols = ar / ga;
    let n_scales = p.scales.len();
    let digest = EncoderParams::Gabor(p.clone()).canonical(rr, ar);
    let mut code = IrisCode::new(
        n_rows * n_scales * 2,
        n_cols,
        EncoderId::Gabor,
        digest_of(&digest),
    );
    let tex = n.texture();
    let mask = n.mask();

    for (s, &(lambda, sigma)) in p.scales.iter().enumerate() {
        let half = (3.0 * sigma).ceil() as isize;
        let env: Vec<f64> = (-half..=half)
            .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let env_sum: f64 = env.iter().sum();
        let carrier_dc = (-half..=half)
            .zip(&env)
            .map(|(t, e)| e * (2.0 * PI * t as f64 / lambda).cos())
            .sum::<f64>()
            / env_sum;
        let re_k: Vec<f64> = (-half..=half)
            .zip(&env)
            .map(|(t, e)| e * ((2.0 * PI * t as f64 / lambda).cos() - carrier_dc))
            .collect();
        let im_k: Vec<f64> = (-half..=half)
            .zip(&env)
            .map(|(t, e)| e * (2.0 * PI * t as f64 / lambda).sin())
            .collect();
        let env_sq: Vec<f64> = env.iter().map(|e| e * e).collect();
        let ang_energy: f64 = env_sq.iter().sum();

        for g in 0..n_rows {
            let ic = (g * gr + gr / 2) as isize;
            // radial pass: envelope-weighted column sums for this grid row
            let mut col_sum = vec![0.0f64; ar];
            let mut col_bad = vec![0.0f64; ar];
            let mut rad_energy = 0.0;
            for (k, dy) in (-half..=half).enumerate() {
                let i = ic + dy;
                if i < 0 || i >= rr as isize {
                    continue;
                }
                let (e, e2) = (env[k], env_sq[k]);
                rad_energy += e2;
                let row = i as usize * ar;
                for j in 0..ar {
                    col_sum[j] += e * tex[row + j] as f64;
                    if !mask[row + j] {
                        col_bad[j] += e2;
                    }
                }
            }
            let total_energy = rad_energy * ang_energy;
            for c in 0..n_cols {
                let jc = (c * ga + ga / 2) as isize;
                let (mut re, mut im, mut bad) = (0.0, 0.0, 0.0);
                for (k, dx) in (-half..=half).enumerate() {
                    let j = (jc + dx).rem_euclid(ar as isize) as usize;
                    re += re_k[k] * col_sum[j];
                    im += im_k[k] * col_sum[j];
                    bad += env_sq[k] * col_bad[j];
                }
                let valid = bad <= p.occlusion_threshold * total_energy;
                let row = (g * n_scales + s) * 2;
                code.set(row, c, re > 0.0, valid);
                code.set(row + 1, c, im > 0.0, valid);
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
            subject_id: "g".into(),
            eye_side: EyeSide::Left,
            eye_color: EyeColor::Blue,
            spectrum: Spectrum::Nir,
            source_path: String::new(),
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
    fn cosine_at_first_carrier_gives_half_period_bands() {
        let n =
            texture(|_, j| 0.5 + 0.5 * (2.0 * std::f32::consts::PI * (j as f32 + 0.5) / 8.0).cos());
        let code = encode_gabor(&n, &GaborBankParams::default()).unwrap();
        for g in 0..8 {
            let re_row = g * 3 * 2;
            for c in 0..512 {
                let expect = matches!(c % 8, 6 | 7 | 0 | 1);
                assert_eq!(code.bit(re_row, c), expect, "row {re_row} col {c}");
                assert!(code.is_valid(re_row, c));
            }
        }
    }

    #[test]
    fn all_masked_input_gives_all_masked_code() {
        let mut n = texture(|i, j| ((i * 31 + j * 17) % 13) as f32 / 13.0);
        n.mask_mut().iter_mut().for_each(|m| *m = false);
        let code = encode_gabor(&n, &GaborBankParams::default()).unwrap();
        assert_eq!(code.valid_count(), 0);
        assert_eq!((code.rows(), code.cols()), (48, 512));
    }

    #[test]
    fn constant_offset_does_not_change_bits() {
        let f = |i: usize, j: usize| (((i * 7919 + j * 104729) % 1000) as f32 / 1000.0) * 0.5;
        let a = encode_gabor(&texture(f), &GaborBankParams::default()).unwrap();
        let b = encode_gabor(&texture(|i, j| f(i, j) + 0.25), &GaborBankParams::default()).unwrap();
        // real bits are exactly DC-free; allow float noise on the imaginary part
        let diff = (0..a.rows())
            .flat_map(|r| (0..a.cols()).map(move |c| (r, c)))
            .filter(|&(r, c)| a.bit(r, c) != b.bit(r, c))
            .count();
        assert!(diff * 1000 <= a.len(), "{diff} bits changed");
    }

    #[test]
    fn grid_must_divide_texture() {
        let n = texture(|_, _| 0.0);
        let p = GaborBankParams {
            sample_grid: (7, 1),
            ..Default::default()
        };
        assert!(matches!(encode_gabor(&n, &p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn digest_tracks_params() {
        let a = GaborBankParams::default();
        let mut b = a.clone();
        assert_eq!(a.digest(64, 512), b.digest(64, 512));
        b.scales[0].1 = 3.5;
        assert_ne!(a.digest(64, 512), b.digest(64, 512));
        assert_ne!(a.digest(64, 512), a.digest(32, 512));
    }
}
