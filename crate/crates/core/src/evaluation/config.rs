use std::path::{Path, PathBuf};

use crate::encoding::EncoderId;
use crate::error::{Error, Result};
use crate::imaging::{Channel, EyeColor};
use crate::matching::{DEFAULT_MAX_SHIFT, DEFAULT_MIN_VALID_BITS};

/// Run configuration of the evaluation protocol.
///
/// Text form, one `key = value` per line, `#` comments:
///
/// ```text
/// encoders = gabor, dct
/// channels = red, green, blue
/// subsets = blue, green, brown_hazel
/// max_shift = 8
/// min_valid_bits = 64
/// seed = 7
/// workers = 4
/// cache_dir = .xiris-cache
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub encoders: Vec<EncoderId>,
    pub channels: Vec<Channel>,
    pub subsets: Vec<EyeColor>,
    pub max_shift: usize,
    pub min_valid_bits: usize,
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            encoders: EncoderId::ALL.to_vec(),
            channels: Channel::ALL.to_vec(),
            subsets: EyeColor::ALL.to_vec(),
            max_shift: DEFAULT_MAX_SHIFT,
            min_valid_bits: DEFAULT_MIN_VALID_BITS,
            seed: 7,
            workers: 0,
            cache_dir: None,
        }
    }
}

fn list<T>(value: &str, origin: &str, line: usize) -> Result<Vec<T>>
where
    T: std::str::FromStr<Err = String> + PartialEq,
{
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: T = item.parse().map_err(|e| Error::parse(origin, line, e))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::parse(origin, line, "empty list"));
    }
    Ok(out)
}

impl EvalConfig {
    /// Applies `text` on top of the defaults. Unknown keys are errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = EvalConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<u64> {
                v.parse::<u64>().map_err(|_| {
                    Error::parse(
                        origin,
                        n + 1,
                        format!("'{v}' is not a non-negative integer"),
                    )
                })
            };
            match key {
                "encoders" => cfg.encoders = list(value, origin, n + 1)?,
                "channels" => cfg.channels = list(value, origin, n + 1)?,
                "subsets" => cfg.subsets = list(value, origin, n + 1)?,
                "max_shift" => cfg.max_shift = num(value)? as usize,
                "min_valid_bits" => cfg.min_valid_bits = num(value)? as usize,
                "seed" => cfg.seed = num(value)?,
                "workers" => cfg.workers = num(value)? as usize,
                "cache_dir" => cfg.cache_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
                other => {
                    return Err(Error::parse(
                        origin,
                        n + 1,
                        format!("unknown key '{other}'"),
                    ))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())?;
        // relative cache dirs are relative to the config file
        if let (Some(dir), Some(parent)) = (cfg.cache_dir.as_ref(), path.parent()) {
            if dir.is_relative() {
                cfg.cache_dir = Some(parent.join(dir));
            }
        }
        Ok(cfg)
    }

    /// Number of (encoder, subset, channel) cells.
    pub fn cell_count(&self) -> usize {
        self.encoders.len() * self.subsets.len() * self.channels.len()
    }
}
