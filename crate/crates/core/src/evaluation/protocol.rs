use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use super::{DatasetManifest, EvalConfig};
use crate::encoding::{EncoderId, IrisCode};
use crate::error::{Error, Result};
use crate::imaging::{load_image, select_channel, Channel, ChannelPolicy, EyeColor, Spectrum};
use crate::matching::{match_with, MatchConfig};
use crate::pipeline::{to_single_plane, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Label {
    Genuine,
    Impostor,
}

/// Indices into the manifest entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub gallery: usize,
    pub probe: usize,
    pub label: Label,
}

/// Every NIR gallery sample against every visible-light probe of the same
/// eye-color subset. `_channel` does not change the pairing; it is part of
/// the signature so that a cell is fully described by its arguments.
pub fn build_comparisons(
    manifest: &DatasetManifest,
    subset: EyeColor,
    _channel: Channel,
) -> Vec<Comparison> {
    let entries = manifest.entries();
    let in_subset = |spectrum: Spectrum| {
        entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.meta.eye_color == subset && e.meta.spectrum == spectrum)
    };
    let mut out = Vec::new();
    for (gi, g) in in_subset(Spectrum::Nir) {
        for (pi, p) in in_subset(Spectrum::Vis) {
            let label = if g.meta.iris_key() == p.meta.iris_key() {
                Label::Genuine
            } else {
                Label::Impostor
            };
            out.push(Comparison {
                gallery: gi,
                probe: pi,
                label,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellKey {
    pub encoder: EncoderId,
    pub subset: EyeColor,
    pub channel: Channel,
    /// Cell picked by a channel policy rather than the channel grid.
    pub policy: bool,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_", self.encoder, self.subset.as_str())?;
        if self.policy {
            write!(f, "policy-")?;
        }
        f.write_str(self.channel.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSet {
    pub cell: CellKey,
    /// Ascending.
    pub genuine: Vec<f64>,
    /// Ascending.
    pub impostor: Vec<f64>,
    /// Distinct samples of this cell that produced no template.
    pub failed_samples: usize,
    /// Pairs dropped because a template was missing or the overlap was too small.
    pub excluded_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FailureRecord {
    pub sample: String,
    /// `nir` or the extracted channel.
    pub band: String,
    pub encoder: String,
    pub stage: String,
    pub kind: String,
    pub message: String,
}

/// Sorted, duplicate-free set of failures; merging is order independent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FailureLedger {
    records: BTreeSet<FailureRecord>,
}

impl FailureLedger {
    pub fn push(&mut self, r: FailureRecord) {
        self.records.insert(r);
    }

    pub fn merge(&mut self, other: FailureLedger) {
        self.records.extend(other.records);
    }

    pub fn records(&self) -> impl Iterator<Item = &FailureRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutput {
    pub scores: Vec<ScoreSet>,
    pub ledger: FailureLedger,
}

#[derive(Debug, Clone)]
struct Failure {
    stage: &'static str,
    kind: String,
    message: String,
}

impl Failure {
    fn new(stage: &'static str, e: &Error) -> Self {
        Self {
            stage,
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

type Template = std::result::Result<IrisCode, Failure>;

/// One image as fed to the pipeline: a NIR sample, or a visible sample
/// reduced to one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Job {
    entry: usize,
    channel: Option<Channel>,
}

struct Cache<'a> {
    dir: Option<&'a Path>,
    pipeline: &'a Pipeline,
}

impl Cache<'_> {
    fn path(&self, image_digest: &str, id: EncoderId) -> Option<PathBuf> {
        self.dir.map(|d| {
            d.join(format!(
                "{}-{}-{}",
                &image_digest[..32],
                id,
                self.pipeline.digest(id)
            ))
        })
    }

    fn load(&self, image_digest: &str, id: EncoderId) -> Option<Template> {
        let base = self.path(image_digest, id)?;
        if let Ok(bytes) = std::fs::read(base.with_extension("ixc")) {
            if let Ok(code) = IrisCode::read_from(bytes.as_slice()) {
                return Some(Ok(code));
            }
        }
        let text = std::fs::read_to_string(base.with_extension("fail")).ok()?;
        let mut it = text.splitn(3, '\t');
        let stage = match it.next()? {
            "segment" => "segment",
            "encode" => "encode",
            _ => return None,
        };
        Some(Err(Failure {
            stage,
            kind: it.next()?.to_string(),
            message: it.next()?.trim_end().to_string(),
        }))
    }

    fn store(&self, image_digest: &str, id: EncoderId, t: &Template) {
        let Some(base) = self.path(image_digest, id) else {
            return;
        };
        // a cache write failure only costs recomputation later
        let _ = match t {
            Ok(code) => write_atomic(&base.with_extension("ixc"), &code.to_bytes()),
            Err(f) => write_atomic(
                &base.with_extension("fail"),
                format!("{}\t{}\t{}\n", f.stage, f.kind, f.message).as_bytes(),
            ),
        };
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

fn make_templates(
    manifest: &DatasetManifest,
    job: Job,
    pipeline: &Pipeline,
    encoders: &[EncoderId],
    cache: &Cache,
) -> std::result::Result<Vec<Template>, Failure> {
    let entry = &manifest.entries()[job.entry];
    let img = load_image(&manifest.resolve(entry), entry.meta.clone())
        .map_err(|e| Failure::new("load", &e))?;
    let plane = to_single_plane(&img, job.channel.unwrap_or(Channel::Red))
        .map_err(|e| Failure::new("load", &e))?;
    let digest = plane.digest();

    let mut out: Vec<Option<Template>> =
        encoders.iter().map(|&id| cache.load(&digest, id)).collect();
    if out.iter().any(Option::is_none) {
        let norm = pipeline.segment_and_normalize(&plane).map(|(_, n)| n);
        for (slot, &id) in out.iter_mut().zip(encoders) {
            if slot.is_none() {
                let t = match &norm {
                    Ok(n) => pipeline
                        .encode(n, id)
                        .map_err(|e| Failure::new("encode", &e)),
                    Err(e) => Err(Failure::new("segment", e)),
                };
                cache.store(&digest, id, &t);
                *slot = Some(t);
            }
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Runs the cross-spectral protocol: NIR gallery against visible probes,
/// one score set per `(encoder, subset, channel)` of `config`, followed by
/// one policy cell per `(encoder, subset)` when `policy` is given.
///
/// Templates are computed once per image and channel and shared across
/// encoders and cells. Per-sample errors go to the ledger; the run itself
/// only fails on an invalid configuration.
pub fn run_protocol(
    manifest: &DatasetManifest,
    config: &EvalConfig,
    pipeline: &Pipeline,
    policy: Option<&ChannelPolicy>,
) -> Result<ProtocolOutput> {
    if let Some(dir) = &config.cache_dir {
        std::fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut cells: Vec<CellKey> = Vec::new();
    for &encoder in &config.encoders {
        for &subset in &config.subsets {
            for &channel in &config.channels {
                cells.push(CellKey {
                    encoder,
                    subset,
                    channel,
                    policy: false,
                });
            }
        }
    }
    if let Some(p) = policy {
        for &encoder in &config.encoders {
            for &subset in &config.subsets {
                let channel = select_channel(subset, encoder.as_str(), p);
                cells.push(CellKey {
                    encoder,
                    subset,
                    channel,
                    policy: true,
                });
            }
        }
    }
    let channels: BTreeSet<Channel> = cells.iter().map(|c| c.channel).collect();
    let subsets: BTreeSet<EyeColor> = cells.iter().map(|c| c.subset).collect();

    let mut jobs = Vec::new();
    for (i, e) in manifest.entries().iter().enumerate() {
        if !subsets.contains(&e.meta.eye_color) {
            continue;
        }
        match e.meta.spectrum {
            Spectrum::Nir => jobs.push(Job {
                entry: i,
                channel: None,
            }),
            Spectrum::Vis => jobs.extend(channels.iter().map(|&c| Job {
                entry: i,
                channel: Some(c),
            })),
        }
    }

    let cache = Cache {
        dir: config.cache_dir.as_deref(),
        pipeline,
    };
    let encoders = &config.encoders;
    let ledger = Mutex::new(FailureLedger::default());
    let templates: HashMap<Job, Vec<Template>> = pool.install(|| {
        jobs.par_iter()
            .map(|&job| {
                let t = make_templates(manifest, job, pipeline, encoders, &cache)
                    .unwrap_or_else(|f| vec![Err(f); encoders.len()]);
                (job, t)
            })
            .collect()
    });

    let record = |job: &Job, id: EncoderId, f: &Failure| FailureRecord {
        sample: manifest.entries()[job.entry].meta.source_path.clone(),
        band: job.channel.map_or("nir", Channel::as_str).to_string(),
        encoder: id.to_string(),
        stage: f.stage.to_string(),
        kind: f.kind.clone(),
        message: f.message.clone(),
    };
    {
        let mut l = ledger.lock().unwrap();
        for (job, ts) in &templates {
            for (t, &id) in ts.iter().zip(encoders) {
                if let Err(f) = t {
                    l.push(record(job, id, f));
                }
            }
        }
    }

    let match_cfg = MatchConfig {
        max_shift: config.max_shift,
        min_valid_bits: config.min_valid_bits,
    };
    let enc_index: BTreeMap<EncoderId, usize> =
        encoders.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let template = |job: Job, id: EncoderId| -> Option<&IrisCode> {
        templates.get(&job)?[enc_index[&id]].as_ref().ok()
    };

    let scores = pool.install(|| {
        cells
            .iter()
            .map(|&cell| {
                let pairs = build_comparisons(manifest, cell.subset, cell.channel);
                let gallery = |c: &Comparison| Job {
                    entry: c.gallery,
                    channel: None,
                };
                let probe = |c: &Comparison| Job {
                    entry: c.probe,
                    channel: Some(cell.channel),
                };
                let results: Vec<Option<(Label, f64)>> = pairs
                    .par_iter()
                    .map(|c| {
                        let a = template(gallery(c), cell.encoder)?;
                        let b = template(probe(c), cell.encoder)?;
                        match match_with(a, b, &match_cfg) {
                            Ok(m) => Some((c.label, m.score)),
                            Err(e) => {
                                let entries = manifest.entries();
                                ledger.lock().unwrap().push(FailureRecord {
                                    sample: format!(
                                        "{} | {}",
                                        entries[c.gallery].meta.source_path,
                                        entries[c.probe].meta.source_path
                                    ),
                                    band: cell.channel.as_str().to_string(),
                                    encoder: cell.encoder.to_string(),
                                    stage: "match".to_string(),
                                    kind: e.kind().to_string(),
                                    message: e.to_string(),
                                });
                                None
                            }
                        }
                    })
                    .collect();
                let mut failed: BTreeSet<Job> = BTreeSet::new();
                for c in &pairs {
                    for job in [gallery(c), probe(c)] {
                        if template(job, cell.encoder).is_none() {
                            failed.insert(job);
                        }
                    }
                }
                let mut set = ScoreSet {
                    cell,
                    genuine: Vec::new(),
                    impostor: Vec::new(),
                    failed_samples: failed.len(),
                    excluded_pairs: 0,
                };
                for r in results {
                    match r {
                        Some((Label::Genuine, s)) => set.genuine.push(s),
                        Some((Label::Impostor, s)) => set.impostor.push(s),
                        None => set.excluded_pairs += 1,
                    }
                }
                set.genuine.sort_by(f64::total_cmp);
                set.impostor.sort_by(f64::total_cmp);
                set
            })
            .collect()
    });

    Ok(ProtocolOutput {
        scores,
        ledger: ledger.into_inner().unwrap(),
    })
}
