//! Cross-spectral evaluation: dataset manifests, the NIR-gallery versus
//! visible-probe comparison protocol, ROC/EER and report files.
//!
//! Each `(subject_id, eye_side)` pair is one iris class; the left and right
//! eyes of a subject are different classes.

mod config;
mod protocol;
mod report;
mod roc;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::EvalConfig;
pub use protocol::{
    build_comparisons, run_protocol, CellKey, Comparison, FailureLedger, FailureRecord, Label,
    ProtocolOutput, ScoreSet,
};
pub use report::{emit_report, CellReport, HISTOGRAM_BINS};
pub use roc::{compute_roc, RocCurve, RocPoint};

use crate::error::{Error, Result};
use crate::imaging::{EyeColor, EyeSide, SampleMeta, Spectrum};

pub const MANIFEST_HEADER: [&str; 5] = ["subject_id", "eye_side", "spectrum", "eye_color", "path"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub meta: SampleMeta,
    /// Relative to the manifest root unless absolute.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub subjects: usize,
    pub irises: usize,
    pub nir_images: usize,
    pub vis_images: usize,
    pub irises_per_color: BTreeMap<EyeColor, usize>,
}

/// Validated list of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    root: PathBuf,
}

impl DatasetManifest {
    /// Checks that every iris with visible-light samples is enrolled in NIR
    /// and that each iris carries a single eye color.
    pub fn new(entries: Vec<ManifestEntry>, root: PathBuf) -> Result<Self> {
        let mut color: BTreeMap<(String, EyeSide), EyeColor> = BTreeMap::new();
        let mut has_nir: BTreeSet<(String, EyeSide)> = BTreeSet::new();
        for e in &entries {
            let key = e.meta.iris_key();
            match color.get(&key) {
                Some(&c) if c != e.meta.eye_color => {
                    return Err(Error::InconsistentEyeColor(e.meta.iris_label()));
                }
                _ => {
                    color.insert(key.clone(), e.meta.eye_color);
                }
            }
            if e.meta.spectrum == Spectrum::Nir {
                has_nir.insert(key);
            }
        }
        if let Some(e) = entries
            .iter()
            .find(|e| e.meta.spectrum == Spectrum::Vis && !has_nir.contains(&e.meta.iris_key()))
        {
            return Err(Error::MissingEnrollment(e.meta.iris_label()));
        }
        Ok(Self { entries, root })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn counts(&self) -> ManifestCounts {
        let subjects: BTreeSet<&str> = self
            .entries
            .iter()
            .map(|e| e.meta.subject_id.as_str())
            .collect();
        let mut irises: BTreeMap<(String, EyeSide), EyeColor> = BTreeMap::new();
        for e in &self.entries {
            irises.insert(e.meta.iris_key(), e.meta.eye_color);
        }
        let mut per_color = BTreeMap::new();
        for c in irises.values() {
            *per_color.entry(*c).or_insert(0) += 1;
        }
        ManifestCounts {
            subjects: subjects.len(),
            irises: irises.len(),
            nir_images: self
                .entries
                .iter()
                .filter(|e| e.meta.spectrum == Spectrum::Nir)
                .count(),
            vis_images: self
                .entries
                .iter()
                .filter(|e| e.meta.spectrum == Spectrum::Vis)
                .count(),
            irises_per_color: per_color,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.meta.subject_id.as_str(),
                &e.meta.eye_side.to_string(),
                e.meta.spectrum.as_str(),
                e.meta.eye_color.as_str(),
                &e.path.to_string_lossy().replace('\\', "/"),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("{other:?}")),
    }
}

/// Reads and validates a manifest CSV. Relative image paths resolve against
/// the manifest's directory and must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let origin = path.display().to_string();
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(&origin, 0, e.to_string()))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(&origin, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::parse(
            &origin,
            1,
            format!("header must be {}", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut entries = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::parse(&origin, line, e.to_string()))?;
        if rec.len() != 5 {
            return Err(Error::parse(&origin, line, "expected 5 fields"));
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let subject_id = field(0).to_string();
        if subject_id.is_empty() {
            return Err(Error::parse(&origin, line, "empty subject_id"));
        }
        let eye_side: EyeSide = field(1)
            .parse()
            .map_err(|e| Error::parse(&origin, line, e))?;
        let spectrum: Spectrum = field(2)
            .parse()
            .map_err(|e| Error::parse(&origin, line, e))?;
        let eye_color: EyeColor = field(3)
            .parse()
            .map_err(|e| Error::parse(&origin, line, e))?;
        let rel = PathBuf::from(field(4));
        let full = if rel.is_absolute() {
            rel.clone()
        } else {
            root.join(&rel)
        };
        if !full.is_file() {
            return Err(Error::parse(
                &origin,
                line,
                format!("image {} does not exist", full.display()),
            ));
        }
        entries.push(ManifestEntry {
            meta: SampleMeta {
                subject_id,
                eye_side,
                eye_color,
                spectrum,
                source_path: field(4).to_string(),
            },
            path: rel,
        });
    }
    DatasetManifest::new(entries, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_manifest(dir: &Path, rows: &[(&str, &str, &str, &str)], touch: bool) -> PathBuf {
        let path = dir.join("m.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "subject_id,eye_side,spectrum,eye_color,path").unwrap();
        for (i, (s, e, sp, c)) in rows.iter().enumerate() {
            let img = format!("img{i}.png");
            if touch {
                std::fs::write(dir.join(&img), b"").unwrap();
            }
            writeln!(f, "{s},{e},{sp},{c},{img}").unwrap();
        }
        path
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_manifest(&write_manifest(dir.path(), &[], true)).unwrap();
        assert_eq!(m.counts(), ManifestCounts::default());
    }

    #[test]
    fn vis_only_iris_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            &[("a", "left", "nir", "blue"), ("a", "right", "vis", "blue")],
            true,
        );
        assert!(matches!(
            load_manifest(&p),
            Err(Error::MissingEnrollment(_))
        ));
    }

    #[test]
    fn inconsistent_color_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            &[("a", "left", "nir", "blue"), ("a", "left", "vis", "green")],
            true,
        );
        assert!(matches!(
            load_manifest(&p),
            Err(Error::InconsistentEyeColor(_))
        ));
    }

    #[test]
    fn parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), &[("a", "up", "nir", "blue")], true);
        assert!(matches!(
            load_manifest(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        let p = write_manifest(dir.path(), &[("a", "left", "nir", "blue")], false);
        std::fs::remove_file(dir.path().join("img0.png")).ok();
        assert!(matches!(load_manifest(&p), Err(Error::Parse { .. })));
        std::fs::write(dir.path().join("bad.csv"), "subject,eye\n").unwrap();
        assert!(matches!(
            load_manifest(&dir.path().join("bad.csv")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn default_shaped_manifest_counts() {
        // 36 subjects, both eyes, six NIR images each, three or four photos
        let dir = tempfile::tempdir().unwrap();
        let colors = crate::synthdata::apportion(36, &[32, 18, 22]);
        let mut color_of = Vec::new();
        for (c, n) in EyeColor::ALL.iter().zip(colors) {
            color_of.extend(std::iter::repeat_n(*c, n));
        }
        let mut rows: Vec<(String, &str, &str, &str)> = Vec::new();
        let mut iris = 0;
        for (s, color) in color_of.iter().enumerate() {
            for side in ["left", "right"] {
                for _ in 0..6 {
                    rows.push((format!("p{s}"), side, "nir", color.as_str()));
                }
                let vis = if iris < 56 { 4 } else { 3 };
                for _ in 0..vis {
                    rows.push((format!("p{s}"), side, "vis", color.as_str()));
                }
                iris += 1;
            }
        }
        let borrowed: Vec<(&str, &str, &str, &str)> = rows
            .iter()
            .map(|(a, b, c, d)| (a.as_str(), *b, *c, *d))
            .collect();
        let m = load_manifest(&write_manifest(dir.path(), &borrowed, true)).unwrap();
        let c = m.counts();
        assert_eq!((c.subjects, c.irises), (36, 72));
        assert_eq!((c.nir_images, c.vis_images), (432, 272));
        assert_eq!(c.irises_per_color[&EyeColor::Blue], 32);
        assert_eq!(c.irises_per_color[&EyeColor::Green], 18);
        assert_eq!(c.irises_per_color[&EyeColor::BrownHazel], 22);
    }
}
