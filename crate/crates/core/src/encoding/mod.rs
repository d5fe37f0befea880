//! Binary iris codes and the two encoders that produce them.
//!
//! An [`IrisCode`] is a `rows x cols` bit matrix with a validity mask of the
//! same shape. Columns always run along the angular axis of the normalized
//! iris so that eye rotation becomes a cyclic column shift.

mod dct;
mod gabor;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dct::{encode_dct, DctPatchParams, DctVariant};
pub use gabor::{encode_gabor, GaborBankParams};

use crate::error::{Error, Result};
use crate::normalization::NormalizedIris;

/// Fraction of a filter window or patch that may be occluded before the
/// resulting bits are masked. Shared by both encoders.
pub const DEFAULT_OCCLUSION_THRESHOLD: f64 = 0.25;

const MAGIC: &[u8; 4] = b"IXC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderId {
    Gabor,
    Dct,
}

impl EncoderId {
    pub const ALL: [EncoderId; 2] = [EncoderId::Gabor, EncoderId::Dct];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderId::Gabor => "gabor",
            EncoderId::Dct => "dct",
        }
    }

    fn tag(self) -> u8 {
        match self {
            EncoderId::Gabor => 0,
            EncoderId::Dct => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(EncoderId::Gabor),
            1 => Ok(EncoderId::Dct),
            t => Err(Error::CodeFormat(format!("unknown encoder tag {t}"))),
        }
    }
}

impl fmt::Display for EncoderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gabor" => Ok(EncoderId::Gabor),
            "dct" => Ok(EncoderId::Dct),
            other => Err(format!("unknown encoder '{other}'")),
        }
    }
}

/// Parameters of either encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams {
    Gabor(GaborBankParams),
    Dct(DctPatchParams),
}

impl EncoderParams {
    pub fn default_for(id: EncoderId) -> Self {
        match id {
            EncoderId::Gabor => EncoderParams::Gabor(GaborBankParams::default()),
            EncoderId::Dct => EncoderParams::Dct(DctPatchParams::default()),
        }
    }

    pub fn id(&self) -> EncoderId {
        match self {
            EncoderParams::Gabor(_) => EncoderId::Gabor,
            EncoderParams::Dct(_) => EncoderId::Dct,
        }
    }

    pub fn encode(&self, n: &NormalizedIris) -> Result<IrisCode> {
        match self {
            EncoderParams::Gabor(p) => encode_gabor(n, p),
            EncoderParams::Dct(p) => encode_dct(n, p),
        }
    }

    /// Canonical description hashed into `params_digest`.
    pub fn canonical(&self, radial_res: usize, angular_res: usize) -> String {
        match self {
            EncoderParams::Gabor(p) => p.canonical(radial_res, angular_res),
            EncoderParams::Dct(p) => p.canonical(radial_res, angular_res),
        }
    }
}

pub(crate) fn digest_of(canonical: &str) -> String {
    let d = Sha256::digest(canonical.as_bytes());
    hex::encode(&d[..8])
}

/// Fixed-size binary template with a per-bit validity mask.
///
/// Each row is packed into `u64` words, bit `c % 64` of word `c / 64`
/// holding column `c`. Padding bits past `cols` are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisCode {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    mask: Vec<u64>,
    pub encoder_id: EncoderId,
    pub params_digest: String,
}

impl IrisCode {
    /// All-zero bits with an all-invalid mask.
    pub fn new(
        rows: usize,
        cols: usize,
        encoder_id: EncoderId,
        params_digest: impl Into<String>,
    ) -> Self {
        let words_per_row = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
            mask: vec![0; rows * words_per_row],
            encoder_id,
            params_digest: params_digest.into(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn bit_words(&self) -> &[u64] {
        &self.bits
    }

    pub fn mask_words(&self) -> &[u64] {
        &self.mask
    }

    #[inline]
    fn locate(&self, row: usize, col: usize) -> (usize, u64) {
        debug_assert!(row < self.rows && col < self.cols);
        (row * self.words_per_row + col / 64, 1u64 << (col % 64))
    }

    #[inline]
    pub fn bit(&self, row: usize, col: usize) -> bool {
        let (w, b) = self.locate(row, col);
        self.bits[w] & b != 0
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        let (w, b) = self.locate(row, col);
        self.mask[w] & b != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, bit: bool, valid: bool) {
        let (w, b) = self.locate(row, col);
        if bit {
            self.bits[w] |= b;
        } else {
            self.bits[w] &= !b;
        }
        if valid {
            self.mask[w] |= b;
        } else {
            self.mask[w] &= !b;
        }
    }

    pub fn flip_bit(&mut self, row: usize, col: usize) {
        let (w, b) = self.locate(row, col);
        self.bits[w] ^= b;
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Cyclic column shift: column `c` of the result is column
    /// `c - shift (mod cols)` of `self`. Bits and mask move together.
    pub fn shifted(&self, shift: isize) -> IrisCode {
        let mut out = self.clone();
        let cols = self.cols as isize;
        if cols == 0 {
            return out;
        }
        let s = shift.rem_euclid(cols) as usize;
        if s == 0 {
            return out;
        }
        for r in 0..self.rows {
            let range = r * self.words_per_row..(r + 1) * self.words_per_row;
            rotate_row(
                &self.bits[range.clone()],
                &mut out.bits[range.clone()],
                self.cols,
                s,
            );
            rotate_row(
                &self.mask[range.clone()],
                &mut out.mask[range],
                self.cols,
                s,
            );
        }
        out
    }

    /// True when `head` starts with the code file magic.
    pub fn has_magic(head: &[u8]) -> bool {
        head.starts_with(MAGIC)
    }

    /// Serializes as documented in `docs/iriscode-format.md`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let digest = self.params_digest.as_bytes();
        if digest.len() > u16::MAX as usize {
            return Err(Error::CodeFormat("params digest too long".into()));
        }
        w.write_all(MAGIC)?;
        w.write_all(&[self.encoder_id.tag()])?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&(digest.len() as u16).to_le_bytes())?;
        w.write_all(digest)?;
        for plane in [&self.bits, &self.mask] {
            w.write_all(&self.pack_plane(plane))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; 15];
        r.read_exact(&mut head)
            .map_err(|_| Error::CodeFormat("truncated header".into()))?;
        if &head[0..4] != MAGIC {
            return Err(Error::CodeFormat("bad magic".into()));
        }
        let encoder_id = EncoderId::from_tag(head[4])?;
        let rows = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(head[9..13].try_into().unwrap()) as usize;
        let dlen = u16::from_le_bytes(head[13..15].try_into().unwrap()) as usize;
        let mut digest = vec![0u8; dlen];
        r.read_exact(&mut digest)
            .map_err(|_| Error::CodeFormat("truncated digest".into()))?;
        let digest = String::from_utf8(digest)
            .map_err(|_| Error::CodeFormat("digest is not UTF-8".into()))?;
        let mut code = IrisCode::new(rows, cols, encoder_id, digest);
        let nbytes = (rows * cols).div_ceil(8);
        let mut planes = [vec![0u8; nbytes], vec![0u8; nbytes]];
        for p in planes.iter_mut() {
            r.read_exact(p)
                .map_err(|_| Error::CodeFormat("truncated bit plane".into()))?;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::CodeFormat("trailing bytes".into()));
        }
        for n in 0..rows * cols {
            let (row, col) = (n / cols, n % cols);
            let get = |p: &[u8]| p[n / 8] >> (n % 8) & 1 == 1;
            code.set(row, col, get(&planes[0]), get(&planes[1]));
        }
        Ok(code)
    }

    /// Row-major, LSB-first byte packing of one plane.
    fn pack_plane(&self, plane: &[u64]) -> Vec<u8> {
        let mut out = vec![0u8; (self.rows * self.cols).div_ceil(8)];
        for row in 0..self.rows {
            for col in 0..self.cols {
                let (w, b) = self.locate(row, col);
                if plane[w] & b != 0 {
                    let n = row * self.cols + col;
                    out[n / 8] |= 1 << (n % 8);
                }
            }
        }
        out
    }
}

/// Rotates one packed row of `cols` bits right by `s` (0 < s < cols).
fn rotate_row(src: &[u64], dst: &mut [u64], cols: usize, s: usize) {
    if cols.is_multiple_of(64) {
        // word-aligned fast path: dst bit c = src bit (c - s) mod cols
        let n = src.len();
        let (ws, bs) = (s / 64, s % 64);
        for (k, d) in dst.iter_mut().enumerate() {
            let hi = src[(k + n - ws) % n];
            *d = if bs == 0 {
                hi
            } else {
                let lo = src[(k + 2 * n - ws - 1) % n];
                (hi << bs) | (lo >> (64 - bs))
            };
        }
        return;
    }
    dst.iter_mut().for_each(|w| *w = 0);
    for c in 0..cols {
        let from = (c + cols - s) % cols;
        if src[from / 64] >> (from % 64) & 1 == 1 {
            dst[c / 64] |= 1 << (c % 64);
        }
    }
}
