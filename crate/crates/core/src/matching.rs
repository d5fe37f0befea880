//! Masked fractional Hamming distance with a cyclic shift search.
//!
//! Shift convention: `match_with_shifts` compares `a` against
//! `b.shifted(s)`, where `shifted(s)` moves every column `s` places to the
//! right (cyclically). If `b == a.shifted(3)` the best shift is therefore
//! `-3`.

use serde::{Deserialize, Serialize};

use crate::encoding::IrisCode;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_VALID_BITS: usize = 64;
pub const DEFAULT_MAX_SHIFT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    /// Fraction of disagreeing bits among jointly valid bits, in `[0, 1]`.
    pub score: f64,
    pub best_shift: isize,
    pub valid_bits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    pub max_shift: usize,
    pub min_valid_bits: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_shift: DEFAULT_MAX_SHIFT,
            min_valid_bits: DEFAULT_MIN_VALID_BITS,
        }
    }
}

fn check_compatible(a: &IrisCode, b: &IrisCode) -> Result<()> {
    if a.encoder_id != b.encoder_id {
        return Err(Error::IncompatibleCodes(format!(
            "encoders {} vs {}",
            a.encoder_id, b.encoder_id
        )));
    }
    if a.params_digest != b.params_digest {
        return Err(Error::IncompatibleCodes(format!(
            "params digests {} vs {}",
            a.params_digest, b.params_digest
        )));
    }
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(Error::IncompatibleCodes(format!(
            "shapes {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// `(disagreeing, jointly valid)` bit counts over packed words.
#[inline]
fn masked_counts(a_bits: &[u64], a_mask: &[u64], b_bits: &[u64], b_mask: &[u64]) -> (usize, usize) {
    let mut diff = 0u32;
    let mut valid = 0u32;
    for i in 0..a_bits.len() {
        let m = a_mask[i] & b_mask[i];
        diff += ((a_bits[i] ^ b_bits[i]) & m).count_ones();
        valid += m.count_ones();
    }
    (diff as usize, valid as usize)
}

/// Unshifted masked fractional Hamming distance.
pub fn fractional_hd(a: &IrisCode, b: &IrisCode) -> Result<MatchScore> {
    fractional_hd_with(a, b, DEFAULT_MIN_VALID_BITS)
}

pub fn fractional_hd_with(a: &IrisCode, b: &IrisCode, min_valid_bits: usize) -> Result<MatchScore> {
    check_compatible(a, b)?;
    let (diff, valid) = masked_counts(a.bit_words(), a.mask_words(), b.bit_words(), b.mask_words());
    if valid < min_valid_bits.max(1) {
        return Err(Error::InsufficientOverlap {
            valid,
            required: min_valid_bits.max(1),
        });
    }
    Ok(MatchScore {
        score: diff as f64 / valid as f64,
        best_shift: 0,
        valid_bits: valid,
    })
}

/// Shift order: 0, -1, 1, -2, 2, ... so that the first minimum found has
/// the smallest `|s|`, preferring negative shifts.
fn shift_order(max_shift: usize) -> impl Iterator<Item = isize> {
    std::iter::once(0).chain((1..=max_shift as isize).flat_map(|s| [-s, s]))
}

/// Minimum fractional HD over cyclic shifts of `b` in `[-max_shift, max_shift]`.
pub fn match_with_shifts(a: &IrisCode, b: &IrisCode, max_shift: usize) -> Result<MatchScore> {
    match_with(
        a,
        b,
        &MatchConfig {
            max_shift,
            ..Default::default()
        },
    )
}

pub fn match_with(a: &IrisCode, b: &IrisCode, cfg: &MatchConfig) -> Result<MatchScore> {
    check_compatible(a, b)?;
    let required = cfg.min_valid_bits.max(1);
    let mut best: Option<(usize, usize, isize)> = None;
    let mut last_valid = 0;
    for s in shift_order(cfg.max_shift) {
        let shifted;
        let bb = if s == 0 {
            b
        } else {
            shifted = b.shifted(s);
            &shifted
        };
        let (diff, valid) = masked_counts(
            a.bit_words(),
            a.mask_words(),
            bb.bit_words(),
            bb.mask_words(),
        );
        last_valid = last_valid.max(valid);
        if valid < required {
            continue;
        }
        // diff/valid < best_diff/best_valid, compared exactly
        let better = match best {
            None => true,
            Some((bd, bv, _)) => (diff as u128) * (bv as u128) < (bd as u128) * (valid as u128),
        };
        if better {
            best = Some((diff, valid, s));
        }
    }
    match best {
        Some((diff, valid, s)) => Ok(MatchScore {
            score: diff as f64 / valid as f64,
            best_shift: s,
            valid_bits: valid,
        }),
        None => Err(Error::InsufficientOverlap {
            valid: last_valid,
            required,
        }),
    }
}
