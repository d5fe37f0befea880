use std::fmt::Write as _;
use std::path::Path;

use super::roc::RocCurve;
use super::{compute_roc, FailureLedger, ScoreSet};
use crate::error::Result;

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub scores: ScoreSet,
    /// `None` when either score list is empty.
    pub roc: Option<RocCurve>,
}

impl CellReport {
    pub fn new(scores: ScoreSet) -> Self {
        let roc = compute_roc(&scores).ok();
        Self { scores, roc }
    }

    pub fn eer(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.eer)
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes into `out_dir`:
///
/// - `roc_<cell>.csv`: `threshold,far,frr`, one row per ROC point
/// - `summary.csv`: `cell,eer,genuine_n,impostor_n,failures` (`eer` is `NA`
///   when a score list is empty)
/// - `histograms.csv`: `cell,kind,bin_lo,bin_hi,count`, fixed bins over `[0, 1]`
/// - `failures.csv`: the ledger
///
/// Files are rewritten completely, numbers use fixed precision, and rows
/// follow the order of `cells`, so equal inputs give equal bytes.
pub fn emit_report(cells: &[CellReport], ledger: &FailureLedger, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = String::from("cell,eer,genuine_n,impostor_n,failures\n");
    let mut hist = String::from("cell,kind,bin_lo,bin_hi,count\n");
    for c in cells {
        let name = c.scores.cell.to_string();
        let eer = c.eer().map_or("NA".to_string(), |e| format!("{e:.6}"));
        let _ = writeln!(
            summary,
            "{name},{eer},{},{},{}",
            c.scores.genuine.len(),
            c.scores.impostor.len(),
            c.scores.failed_samples
        );

        let mut roc = String::from("threshold,far,frr\n");
        if let Some(r) = &c.roc {
            for p in &r.points {
                let _ = writeln!(roc, "{:.9},{:.9},{:.9}", p.threshold, p.far, p.frr);
            }
        }
        std::fs::write(out_dir.join(format!("roc_{name}.csv")), roc)?;

        for (kind, list) in [
            ("genuine", &c.scores.genuine),
            ("impostor", &c.scores.impostor),
        ] {
            let mut counts = [0usize; HISTOGRAM_BINS];
            for &s in list.iter() {
                let b = ((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
                counts[b] += 1;
            }
            for (b, n) in counts.iter().enumerate() {
                let lo = b as f64 / HISTOGRAM_BINS as f64;
                let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
                let _ = writeln!(hist, "{name},{kind},{lo:.2},{hi:.2},{n}");
            }
        }
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;
    std::fs::write(out_dir.join("histograms.csv"), hist)?;

    let mut fails = String::from("sample,band,encoder,stage,kind,message\n");
    for r in ledger.records() {
        let _ = writeln!(
            fails,
            "{},{},{},{},{},{}",
            field(&r.sample),
            r.band,
            r.encoder,
            r.stage,
            r.kind,
            field(&r.message)
        );
    }
    std::fs::write(out_dir.join("failures.csv"), fails)?;
    Ok(())
}
