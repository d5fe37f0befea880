//! Cross-spectral iris recognition: NIR enrollment images matched against
//! single channels of visible-light photos.
//!
//! The pipeline is `imaging` (channel selection and cropping) →
//! `segmentation` (pupil and limbus circles, noise mask) → `normalization`
//! (rubber-sheet unwrapping) → `encoding` (Gabor phase or DCT patch codes) →
//! `matching` (masked fractional Hamming distance with rotation search).
//! `evaluation` runs the NIR-gallery versus visible-probe protocol and
//! `synthdata` renders a labelled multispectral dataset to run it on.

pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod matching;
pub mod normalization;
pub mod pipeline;
pub mod raster;
pub mod segmentation;
pub mod synthdata;

pub use encoding::{EncoderId, EncoderParams, IrisCode};
pub use error::{Error, Result};
pub use evaluation::{DatasetManifest, EvalConfig, RocCurve, ScoreSet};
pub use imaging::{
    Band, Channel, ChannelPolicy, EyeColor, EyeImage, EyeSide, SampleMeta, Spectrum,
};
pub use matching::{MatchConfig, MatchScore};
pub use normalization::NormalizedIris;
pub use pipeline::Pipeline;
pub use raster::Mask;
pub use segmentation::{Circle, SegmentationResult};
pub use synthdata::GroundTruth;
