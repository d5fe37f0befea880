//! Eye images, loading, VGA cropping, RGB channel decomposition and the
//! eye-color to channel selection policy.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Width and height of the VGA frame colour probes are cropped to.
pub const VGA: (usize, usize) = (640, 480);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Red,
    Green,
    Blue,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Red, Channel::Green, Channel::Blue];

    pub fn index(self) -> usize {
        match self {
            Channel::Red => 0,
            Channel::Green => 1,
            Channel::Blue => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Red => "red",
            Channel::Green => "green",
            Channel::Blue => "blue",
        }
    }
}

/// Spectral band an image (or image plane) was acquired in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Nir,
    Rgb,
    Red,
    Green,
    Blue,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::Nir => "nir",
            Band::Rgb => "rgb",
            Band::Red => "red",
            Band::Green => "green",
            Band::Blue => "blue",
        }
    }

    pub fn plane_count(self) -> usize {
        if self == Band::Rgb {
            3
        } else {
            1
        }
    }
}

impl From<Channel> for Band {
    fn from(c: Channel) -> Self {
        match c {
            Channel::Red => Band::Red,
            Channel::Green => Band::Green,
            Channel::Blue => Band::Blue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EyeColor {
    Blue,
    Green,
    BrownHazel,
}

impl EyeColor {
    pub const ALL: [EyeColor; 3] = [EyeColor::Blue, EyeColor::Green, EyeColor::BrownHazel];

    pub fn as_str(self) -> &'static str {
        match self {
            EyeColor::Blue => "blue",
            EyeColor::Green => "green",
            EyeColor::BrownHazel => "brown_hazel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spectrum {
    Nir,
    Vis,
}

impl Spectrum {
    pub fn as_str(self) -> &'static str {
        match self {
            Spectrum::Nir => "nir",
            Spectrum::Vis => "vis",
        }
    }
}

macro_rules! impl_text {
    ($ty:ty, $what:literal, [$($text:literal => $val:expr),+ $(,)?]) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($val),)+
                    other => Err(format!(concat!("unknown ", $what, " '{}'"), other)),
                }
            }
        }
    };
}

impl_text!(Channel, "channel", ["red" => Channel::Red, "green" => Channel::Green, "blue" => Channel::Blue]);
impl_text!(EyeSide, "eye side", ["left" => EyeSide::Left, "l" => EyeSide::Left, "right" => EyeSide::Right, "r" => EyeSide::Right]);
impl_text!(EyeColor, "eye color", [
    "blue" => EyeColor::Blue,
    "green" => EyeColor::Green,
    "brown_hazel" => EyeColor::BrownHazel,
    "brown" => EyeColor::BrownHazel,
    "hazel" => EyeColor::BrownHazel,
]);
impl_text!(Spectrum, "spectrum", ["nir" => Spectrum::Nir, "vis" => Spectrum::Vis]);

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for EyeColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for EyeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        })
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Acquisition metadata attached to every image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleMeta {
    pub subject_id: String,
    pub eye_side: EyeSide,
    pub eye_color: EyeColor,
    pub spectrum: Spectrum,
    pub source_path: String,
}

impl SampleMeta {
    /// Key of the iris class this sample belongs to.
    pub fn iris_key(&self) -> (String, EyeSide) {
        (self.subject_id.clone(), self.eye_side)
    }

    pub fn iris_label(&self) -> String {
        format!("{}/{}", self.subject_id, self.eye_side)
    }
}

/// An 8-bit raster with one plane (NIR or a single colour channel) or three
/// planes (RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EyeImage {
    width: usize,
    height: usize,
    planes: Vec<Vec<u8>>,
    band: Band,
    pub meta: SampleMeta,
}

impl EyeImage {
    pub fn new(
        width: usize,
        height: usize,
        planes: Vec<Vec<u8>>,
        band: Band,
        meta: SampleMeta,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be positive".into(),
            ));
        }
        if planes.len() != band.plane_count() {
            return Err(Error::InvalidParameter(format!(
                "band {band} needs {} plane(s), got {}",
                band.plane_count(),
                planes.len()
            )));
        }
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::InvalidParameter(
                "plane size does not match dimensions".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            planes,
            band,
            meta,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    /// The single plane of a one-plane image.
    pub fn gray(&self) -> Result<&[u8]> {
        if self.planes.len() != 1 {
            return Err(Error::NotSinglePlane(self.band.to_string()));
        }
        Ok(&self.planes[0])
    }

    #[inline]
    pub fn pixel(&self, plane: usize, x: usize, y: usize) -> u8 {
        self.planes[plane][y * self.width + x]
    }

    /// Content digest over band, dimensions and pixels; metadata excluded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.band.as_str().as_bytes());
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        for p in &self.planes {
            h.update(p);
        }
        hex::encode(h.finalize())
    }

    /// Writes the image losslessly; the format follows the file extension
    /// (PNG or BMP).
    pub fn save(&self, path: &Path) -> Result<()> {
        let res = if self.planes.len() == 1 {
            image::GrayImage::from_raw(
                self.width as u32,
                self.height as u32,
                self.planes[0].clone(),
            )
            .expect("plane size checked at construction")
            .save(path)
        } else {
            let mut buf = Vec::with_capacity(self.width * self.height * 3);
            for i in 0..self.width * self.height {
                buf.extend(self.planes.iter().map(|p| p[i]));
            }
            image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
                .expect("plane size checked at construction")
                .save(path)
        };
        res.map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::InvalidParameter(other.to_string()),
        })
    }
}

/// Decodes an 8-bit grayscale or 24-bit colour file (PNG, BMP, JPEG).
///
/// The plane count must agree with `meta.spectrum`: NIR images are single
/// plane, visible-light images are RGB.
pub fn load_image(path: &Path, meta: SampleMeta) -> Result<EyeImage> {
    let unreadable = |reason: String| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason,
    };
    let decoded = image::ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .decode()
        .map_err(|e| unreadable(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let planes = match decoded {
        image::DynamicImage::ImageLuma8(g) => vec![g.into_raw()],
        image::DynamicImage::ImageRgb8(rgb) => {
            let raw = rgb.into_raw();
            (0..3)
                .map(|c| raw.iter().skip(c).step_by(3).copied().collect())
                .collect()
        }
        other => {
            return Err(unreadable(format!(
                "unsupported pixel layout {:?}; expected 8-bit gray or 24-bit RGB",
                other.color()
            )))
        }
    };
    let mut planes: Vec<Vec<u8>> = planes;
    // palettized gray BMPs decode as RGB with equal channels
    if meta.spectrum == Spectrum::Nir
        && planes.len() == 3
        && planes[0] == planes[1]
        && planes[1] == planes[2]
    {
        planes.truncate(1);
    }
    let band = match (planes.len(), meta.spectrum) {
        (1, Spectrum::Nir) => Band::Nir,
        (3, Spectrum::Vis) => Band::Rgb,
        (n, s) => {
            return Err(Error::BandMismatch {
                planes: n,
                spectrum: s.to_string(),
            })
        }
    };
    EyeImage::new(width, height, planes, band, meta)
}

/// Centered crop with offsets `floor((dim - target) / 2)`.
pub fn crop_center(img: &EyeImage, target_w: usize, target_h: usize) -> Result<EyeImage> {
    let x0 = img.width.saturating_sub(target_w) / 2;
    let y0 = img.height.saturating_sub(target_h) / 2;
    crop_at(img, x0, y0, target_w, target_h)
}

/// Crop with explicit top-left offsets.
pub fn crop_at(
    img: &EyeImage,
    x0: usize,
    y0: usize,
    target_w: usize,
    target_h: usize,
) -> Result<EyeImage> {
    if target_w == 0 || target_h == 0 || x0 + target_w > img.width || y0 + target_h > img.height {
        return Err(Error::TargetTooLarge {
            width: img.width,
            height: img.height,
            target_w,
            target_h,
        });
    }
    let planes = img
        .planes
        .iter()
        .map(|p| {
            let mut out = Vec::with_capacity(target_w * target_h);
            for y in y0..y0 + target_h {
                let row = y * img.width;
                out.extend_from_slice(&p[row + x0..row + x0 + target_w]);
            }
            out
        })
        .collect();
    EyeImage::new(target_w, target_h, planes, img.band, img.meta.clone())
}

/// Copies one colour plane verbatim into a single-plane image.
pub fn extract_channel(img: &EyeImage, channel: Channel) -> Result<EyeImage> {
    if img.band != Band::Rgb {
        return Err(Error::NotColorImage(img.band.to_string()));
    }
    EyeImage::new(
        img.width,
        img.height,
        vec![img.planes[channel.index()].clone()],
        channel.into(),
        img.meta.clone(),
    )
}

/// Re-assembles an RGB image from three single-channel images.
pub fn stack_channels(red: &EyeImage, green: &EyeImage, blue: &EyeImage) -> Result<EyeImage> {
    let parts = [red, green, blue];
    for (img, ch) in parts.iter().zip(Channel::ALL) {
        if img.band != Band::from(ch) || (img.width, img.height) != (red.width, red.height) {
            return Err(Error::ShapeMismatch(format!(
                "expected {ch} plane of size {}x{}",
                red.width, red.height
            )));
        }
    }
    EyeImage::new(
        red.width,
        red.height,
        parts.iter().map(|i| i.planes[0].clone()).collect(),
        Band::Rgb,
        red.meta.clone(),
    )
}

/// Eye color and encoder to colour channel lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPolicy {
    pub table: BTreeMap<(EyeColor, String), Channel>,
    pub default_channel: Channel,
}

impl Default for ChannelPolicy {
    /// Red for every eye color and encoder.
    fn default() -> Self {
        let mut table = BTreeMap::new();
        for color in EyeColor::ALL {
            for enc in ["gabor", "dct"] {
                table.insert((color, enc.to_string()), Channel::Red);
            }
        }
        Self {
            table,
            default_channel: Channel::Red,
        }
    }
}

impl ChannelPolicy {
    /// Policy with no explicit cells; everything falls back to red.
    pub fn empty() -> Self {
        Self {
            table: BTreeMap::new(),
            default_channel: Channel::Red,
        }
    }

    pub fn with(mut self, color: EyeColor, encoder: &str, channel: Channel) -> Self {
        self.table.insert((color, encoder.to_string()), channel);
        self
    }

    /// Parses the `eye_color.encoder_id = channel` / `default = channel`
    /// text format. `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut policy = ChannelPolicy::empty();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected 'key = channel'"))?;
            let (key, value) = (key.trim(), value.trim());
            let channel: Channel = value.parse().map_err(|e| Error::parse(origin, n + 1, e))?;
            if key == "default" {
                policy.default_channel = channel;
                continue;
            }
            let (color, encoder) = key
                .split_once('.')
                .ok_or_else(|| Error::parse(origin, n + 1, format!("unknown key '{key}'")))?;
            let color: EyeColor = color.parse().map_err(|e| Error::parse(origin, n + 1, e))?;
            let encoder = encoder.trim();
            if encoder.is_empty()
                || !encoder
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    format!("bad encoder id '{encoder}'"),
                ));
            }
            policy.table.insert((color, encoder.to_string()), channel);
        }
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ((color, enc), ch) in &self.table {
            out.push_str(&format!("{color}.{enc} = {ch}\n"));
        }
        out.push_str(&format!("default = {}\n", self.default_channel));
        out
    }
}

pub fn select_channel(eye_color: EyeColor, encoder_id: &str, policy: &ChannelPolicy) -> Channel {
    policy
        .table
        .get(&(eye_color, encoder_id.to_string()))
        .copied()
        .unwrap_or(policy.default_channel)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn meta(spectrum: Spectrum) -> SampleMeta {
        SampleMeta {
            subject_id: "s01".into(),
            eye_side: EyeSide::Left,
            eye_color: EyeColor::BrownHazel,
            spectrum,
            source_path: String::new(),
        }
    }

    fn rgb(width: usize, height: usize) -> EyeImage {
        let planes = (0..3)
            .map(|c| {
                (0..width * height)
                    .map(|i| ((i * 7 + c * 50) % 256) as u8)
                    .collect()
            })
            .collect();
        EyeImage::new(width, height, planes, Band::Rgb, meta(Spectrum::Vis)).unwrap()
    }

    #[test]
    fn crop_offsets_for_phone_frame() {
        let img = EyeImage::new(
            3264,
            2448,
            vec![vec![0; 3264 * 2448]],
            Band::Nir,
            meta(Spectrum::Nir),
        )
        .unwrap();
        assert_eq!((3264 - 640) / 2, 1312);
        assert_eq!((2448 - 480) / 2, 984);
        let mut marked = img.clone();
        marked.planes[0][984 * 3264 + 1312] = 9;
        let c = crop_center(&marked, 640, 480).unwrap();
        assert_eq!((c.width(), c.height()), VGA);
        assert_eq!(c.pixel(0, 0, 0), 9);
        assert_eq!(c.meta, img.meta);
    }

    #[test]
    fn crop_identity_and_too_large() {
        let img = rgb(20, 10);
        assert_eq!(crop_center(&img, 20, 10).unwrap(), img);
        assert!(matches!(
            crop_center(&img, 21, 10),
            Err(Error::TargetTooLarge { .. })
        ));
    }

    #[test]
    fn extract_green_is_plane_copy() {
        let mut img = rgb(4, 4);
        img.planes[0][5] = 10;
        img.planes[1][5] = 200;
        img.planes[2][5] = 30;
        let g = extract_channel(&img, Channel::Green).unwrap();
        assert_eq!(g.band(), Band::Green);
        assert_eq!(g.pixel(0, 1, 1), 200);
        assert!(matches!(
            extract_channel(&g, Channel::Red),
            Err(Error::NotColorImage(_))
        ));
    }

    #[test]
    fn decomposition_is_lossless() {
        let img = rgb(13, 7);
        let [r, g, b] = Channel::ALL.map(|c| extract_channel(&img, c).unwrap());
        assert_eq!(stack_channels(&r, &g, &b).unwrap(), img);
    }

    #[test]
    fn crop_commutes_with_extract() {
        let img = rgb(30, 20);
        for ch in Channel::ALL {
            let a = extract_channel(&crop_center(&img, 16, 9).unwrap(), ch).unwrap();
            let b = crop_center(&extract_channel(&img, ch).unwrap(), 16, 9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn default_policy_is_red() {
        let p = ChannelPolicy::default();
        assert_eq!(
            select_channel(EyeColor::BrownHazel, "gabor", &p),
            Channel::Red
        );
        assert_eq!(select_channel(EyeColor::Blue, "unknown", &p), Channel::Red);
        let o = p.with(EyeColor::Blue, "dct", Channel::Green);
        assert_eq!(select_channel(EyeColor::Blue, "dct", &o), Channel::Green);
    }

    #[test]
    fn default_channel_does_not_touch_explicit_cells() {
        let mut p = ChannelPolicy::empty().with(EyeColor::Green, "gabor", Channel::Blue);
        p.default_channel = Channel::Green;
        assert_eq!(select_channel(EyeColor::Green, "gabor", &p), Channel::Blue);
        assert_eq!(select_channel(EyeColor::Blue, "gabor", &p), Channel::Green);
    }

    #[test]
    fn policy_text_format() {
        let text = "# comment\nblue.dct = green\n default = blue \n";
        let p = ChannelPolicy::parse(text, "t").unwrap();
        assert_eq!(p.default_channel, Channel::Blue);
        assert_eq!(select_channel(EyeColor::Blue, "dct", &p), Channel::Green);
        assert_eq!(ChannelPolicy::parse(&p.to_text(), "t").unwrap(), p);
        for bad in [
            "colour = red",
            "purple.gabor = red",
            "blue.gabor = cyan",
            "blue.gabor red",
        ] {
            assert!(ChannelPolicy::parse(bad, "t").is_err(), "{bad}");
        }
    }

    #[test]
    fn shipped_policy_file_matches_default() {
        let text = include_str!("../../../config/channel_policy.cfg");
        assert_eq!(
            ChannelPolicy::parse(text, "shipped").unwrap(),
            ChannelPolicy::default()
        );
    }

    #[test]
    fn load_rejects_band_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = rgb(8, 6);
        let path = dir.path().join("c.png");
        img.save(&path).unwrap();
        assert!(matches!(
            load_image(&path, meta(Spectrum::Nir)),
            Err(Error::BandMismatch { planes: 3, .. })
        ));
        let back = load_image(&path, meta(Spectrum::Vis)).unwrap();
        assert_eq!(back.planes(), img.planes());
        assert!(matches!(
            load_image(&dir.path().join("missing.png"), meta(Spectrum::Vis)),
            Err(Error::UnreadableFile { .. })
        ));
    }

    #[test]
    fn nir_bitmap_loads_single_plane() {
        let dir = tempfile::tempdir().unwrap();
        let img = EyeImage::new(
            480,
            640,
            vec![vec![77; 480 * 640]],
            Band::Nir,
            meta(Spectrum::Nir),
        )
        .unwrap();
        let path = dir.path().join("n.bmp");
        img.save(&path).unwrap();
        let back = load_image(&path, meta(Spectrum::Nir)).unwrap();
        assert_eq!(back.band(), Band::Nir);
        assert_eq!((back.width(), back.height()), (480, 640));
        assert_eq!(back.planes(), img.planes());
    }
}
