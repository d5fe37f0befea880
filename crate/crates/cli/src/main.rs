//! `xiris`: command-line front end for the cross-spectral iris pipeline.
//!
//! Errors are reported on stderr as a single `error: <Kind>: <message>` line
//! with exit status 1; usage errors exit with status 2.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use xiris_core::evaluation::{emit_report, load_manifest, run_protocol, CellReport};
use xiris_core::imaging::load_image;
use xiris_core::matching::{match_with, DEFAULT_MAX_SHIFT, DEFAULT_MIN_VALID_BITS};
use xiris_core::pipeline::to_single_plane;
use xiris_core::synthdata::{generate_dataset, DatasetSpec, SpectralContrastModel};
use xiris_core::{
    Channel, ChannelPolicy, EncoderId, Error, EvalConfig, EyeColor, EyeImage, EyeSide, IrisCode,
    MatchConfig, Pipeline, SampleMeta, Spectrum,
};

#[derive(Parser)]
#[command(name = "xiris", version, about = "Cross-spectral iris recognition")]
struct Cli {
    /// Print progress and timings on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic NIR + RGB dataset with manifest and ground truth.
    Synth(SynthArgs),
    /// Turn one eye image into a serialized iris code.
    Enroll(EnrollArgs),
    /// Compare two iris codes or two eye images; prints `score best_shift valid_bits`.
    Match(MatchArgs),
    /// Run the NIR-versus-visible protocol over a manifest and write reports.
    Evaluate(EvaluateArgs),
    /// Write the detected circles (`cx cy r`) and the noise mask of an image.
    Segment(DumpArgs),
    /// Write the normalized texture and mask of an image as PNGs.
    Normalize(DumpArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    subjects: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// NIR renders per iris.
    #[arg(long, default_value_t = 6)]
    n_nir: usize,
    /// RGB renders per iris.
    #[arg(long, default_value_t = 3)]
    n_vis: usize,
    /// Spectral contrast model file; the shipped model when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImageArgs {
    /// `nir` or `vis`; `auto` treats single-plane (or grey) images as NIR.
    #[arg(long, default_value = "auto")]
    spectrum: String,
    /// Channel used for RGB images.
    #[arg(long, default_value_t = Channel::Red)]
    channel: Channel,
}

#[derive(Args)]
struct EnrollArgs {
    image: PathBuf,
    #[arg(long, default_value_t = EncoderId::Gabor)]
    encoder: EncoderId,
    #[command(flatten)]
    image_args: ImageArgs,
    /// Output code file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    /// Iris code file or eye image.
    a: PathBuf,
    /// Iris code file or eye image.
    b: PathBuf,
    /// Encoder used when an input is an image.
    #[arg(long, default_value_t = EncoderId::Gabor)]
    encoder: EncoderId,
    #[command(flatten)]
    image_args: ImageArgs,
    #[arg(long, default_value_t = DEFAULT_MAX_SHIFT)]
    max_shift: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_VALID_BITS)]
    min_valid_bits: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run configuration; built-in defaults (18 cells) when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `workers` from the config (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also score one channel-policy cell per encoder and subset.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Template cache directory; overrides `cache_dir` from the config.
    #[arg(long, env = "XIRIS_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    image: PathBuf,
    #[command(flatten)]
    image_args: ImageArgs,
    /// Output directory; files are named after the image.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn meta_for(path: &Path, spectrum: Spectrum) -> SampleMeta {
    SampleMeta {
        subject_id: "cli".into(),
        eye_side: EyeSide::Left,
        eye_color: EyeColor::Blue,
        spectrum,
        source_path: path.display().to_string(),
    }
}

fn read_image(path: &Path, args: &ImageArgs) -> Result<EyeImage, Error> {
    let img = match args.spectrum.as_str() {
        "nir" => load_image(path, meta_for(path, Spectrum::Nir))?,
        "vis" => load_image(path, meta_for(path, Spectrum::Vis))?,
        "auto" => match load_image(path, meta_for(path, Spectrum::Nir)) {
            Err(Error::BandMismatch { .. }) => load_image(path, meta_for(path, Spectrum::Vis))?,
            other => other?,
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown spectrum '{other}'"
            )))
        }
    };
    to_single_plane(&img, args.channel)
}

fn is_code_file(path: &Path) -> Result<bool, Error> {
    let mut head = [0u8; 4];
    let unreadable = |e: std::io::Error| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut f = std::fs::File::open(path).map_err(unreadable)?;
    Ok(
        std::io::Read::read(&mut f, &mut head).map_err(unreadable)? == 4
            && IrisCode::has_magic(&head),
    )
}

fn load_or_encode(path: &Path, args: &MatchArgs, pipeline: &Pipeline) -> Result<IrisCode, Error> {
    if is_code_file(path)? {
        IrisCode::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    } else {
        pipeline.template(&read_image(path, &args.image_args)?, args.encoder)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or("image".into(), |s| s.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> Result<(), Error> {
    let pipeline = Pipeline::default();
    let start = Instant::now();
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Synth(a) => {
            let model = match &a.model {
                Some(p) => SpectralContrastModel::load(p)?,
                None => SpectralContrastModel::default(),
            };
            let spec = DatasetSpec {
                subjects: a.subjects,
                n_nir: a.n_nir,
                n_vis: a.n_vis,
                seed: a.seed,
                model,
                ..DatasetSpec::default()
            };
            let manifest = generate_dataset(&spec, &a.out)?;
            let c = manifest.counts();
            writeln!(
                out,
                "subjects {} irises {} nir {} vis {}",
                c.subjects, c.irises, c.nir_images, c.vis_images
            )?;
        }
        Command::Enroll(a) => {
            let code = pipeline.template(&read_image(&a.image, &a.image_args)?, a.encoder)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
            code.write_to(&mut f)?;
            f.flush()?;
        }
        Command::Match(a) => {
            let ca = load_or_encode(&a.a, &a, &pipeline)?;
            let cb = load_or_encode(&a.b, &a, &pipeline)?;
            let cfg = MatchConfig {
                max_shift: a.max_shift,
                min_valid_bits: a.min_valid_bits,
            };
            let s = match_with(&ca, &cb, &cfg)?;
            writeln!(out, "{:.6} {} {}", s.score, s.best_shift, s.valid_bits)?;
        }
        Command::Evaluate(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let mut config = match &a.config {
                Some(p) => EvalConfig::load(p)?,
                None => EvalConfig::default(),
            };
            if let Some(w) = a.workers {
                config.workers = w;
            }
            if a.cache_dir.is_some() {
                config.cache_dir = a.cache_dir.clone();
            }
            let policy = a.policy.as_deref().map(ChannelPolicy::load).transpose()?;
            let result = run_protocol(&manifest, &config, &pipeline, policy.as_ref())?;
            let cells: Vec<CellReport> = result.scores.into_iter().map(CellReport::new).collect();
            emit_report(&cells, &result.ledger, &a.out)?;
            for c in &cells {
                let eer = c.eer().map_or("NA".to_string(), |e| format!("{e:.6}"));
                writeln!(out, "{} {eer}", c.scores.cell)?;
            }
            if cli.verbose > 0 {
                eprintln!(
                    "{} failures; reports in {}",
                    result.ledger.len(),
                    a.out.display()
                );
            }
        }
        Command::Segment(a) => {
            let img = read_image(&a.image, &a.image_args)?;
            let seg = xiris_core::segmentation::segment_iris_with(&img, &pipeline.segmentation)?;
            std::fs::create_dir_all(&a.out)?;
            let s = stem(&a.image);
            seg.write_debug(
                &a.out.join(format!("{s}.circles.txt")),
                &a.out.join(format!("{s}.mask.png")),
            )?;
        }
        Command::Normalize(a) => {
            let img = read_image(&a.image, &a.image_args)?;
            let (_, norm) = pipeline.segment_and_normalize(&img)?;
            std::fs::create_dir_all(&a.out)?;
            let s = stem(&a.image);
            norm.write_debug(
                &a.out.join(format!("{s}.texture.png")),
                &a.out.join(format!("{s}.normmask.png")),
            )?;
        }
    }
    if cli.verbose > 0 {
        eprintln!("done in {:.2?}", start.elapsed());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}
