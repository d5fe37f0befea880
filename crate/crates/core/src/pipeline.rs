//! Image to template: segment, unwrap, encode.

use crate::encoding::digest_of;
use crate::encoding::{EncoderId, EncoderParams, IrisCode};
use crate::error::Result;
use crate::imaging::{crop_center, extract_channel, Band, Channel, EyeImage, VGA};
use crate::normalization::{rubber_sheet, NormalizedIris, DEFAULT_ANGULAR_RES, DEFAULT_RADIAL_RES};
use crate::segmentation::{segment_iris_with, SegmentationConfig, SegmentationResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub segmentation: SegmentationConfig,
    pub radial_res: usize,
    pub angular_res: usize,
    pub gabor: EncoderParams,
    pub dct: EncoderParams,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            radial_res: DEFAULT_RADIAL_RES,
            angular_res: DEFAULT_ANGULAR_RES,
            gabor: EncoderParams::default_for(EncoderId::Gabor),
            dct: EncoderParams::default_for(EncoderId::Dct),
        }
    }
}

impl Pipeline {
    pub fn encoder(&self, id: EncoderId) -> &EncoderParams {
        match id {
            EncoderId::Gabor => &self.gabor,
            EncoderId::Dct => &self.dct,
        }
    }

    /// Digest of everything that influences a template for `id`.
    pub fn digest(&self, id: EncoderId) -> String {
        digest_of(&format!(
            "{:?};norm={}x{};{}",
            self.segmentation,
            self.radial_res,
            self.angular_res,
            self.encoder(id)
                .canonical(self.radial_res, self.angular_res)
        ))
    }

    pub fn segment_and_normalize(
        &self,
        img: &EyeImage,
    ) -> Result<(SegmentationResult, NormalizedIris)> {
        let seg = segment_iris_with(img, &self.segmentation)?;
        let norm = rubber_sheet(img, &seg, self.radial_res, self.angular_res)?;
        Ok((seg, norm))
    }

    pub fn encode(&self, norm: &NormalizedIris, id: EncoderId) -> Result<IrisCode> {
        self.encoder(id).encode(norm)
    }

    /// Full template from a single-plane image.
    pub fn template(&self, img: &EyeImage, id: EncoderId) -> Result<IrisCode> {
        let (_, norm) = self.segment_and_normalize(img)?;
        self.encode(&norm, id)
    }
}

/// Brings any loaded image to a single-plane image: NIR and single
/// channels pass through; RGB is cropped to VGA when larger and then
/// reduced to `channel`.
pub fn to_single_plane(img: &EyeImage, channel: Channel) -> Result<EyeImage> {
    if img.band() != Band::Rgb {
        return Ok(img.clone());
    }
    let cropped = if img.width() > VGA.0 || img.height() > VGA.1 {
        crop_center(img, VGA.0.min(img.width()), VGA.1.min(img.height()))?
    } else {
        img.clone()
    };
    extract_channel(&cropped, channel)
}
