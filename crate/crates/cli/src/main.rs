//! `tml`: generate, encode, track, evaluate and augment pose sequences.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use tml_core::config::RunConfig;
use tml_core::encode::{encode_jointflow, encode_tml, ChannelLayout};
use tml_core::io::{gt_sidecar_path, read_annotations, write_annotations, write_flowmap};
use tml_core::metrics::{evaluate, DEFAULT_PCKH_FACTOR};
use tml_core::pose::Sequence;
use tml_core::sampler::augment_sample;
use tml_core::scoring::Interpolation;
use tml_core::synth::{apply_corruption, generate_sequence, MotionPreset};
use tml_core::tracker::{pairing_by_id, track_sequence, FlowSource, GroundTruthFlow, NoFlow};
use tml_core::TmlError;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

const AFTER_HELP: &str = "\
Settings come from built-in defaults, then the --config TOML file, then
command-line flags; later sources win.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 invalid input
(malformed file, bad configuration, infeasible scene, missing frames).";

#[derive(Parser)]
#[command(name = "tml", version, about = "Pose tracking with temporal flow maps for limbs", after_help = AFTER_HELP)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: detections at OUT, ground truth at OUT's .gt.json sidecar.
    Synth(SynthArgs),
    /// Encode the flow map between two frames of an annotated sequence.
    Encode(EncodeArgs),
    /// Assign track ids to the poses of one or more sequences.
    Track(TrackArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Write augmented multi-stride frame pairs and a manifest.
    Augment(AugmentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Individual,
    Accumulated,
}

impl From<LayoutArg> for ChannelLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Individual => ChannelLayout::Individual,
            LayoutArg::Accumulated => ChannelLayout::Accumulated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Temporal flow maps for limbs.
    Limbs,
    /// One channel per joint (Joint-Flow baseline).
    Joints,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    Nearest,
    Bilinear,
}

#[derive(Args)]
struct SynthArgs {
    /// Output annotation file (detections, ids stripped).
    #[arg(long)]
    out: PathBuf,
    /// static | crossing | wander | occlusion-middle | passing
    #[arg(long)]
    preset: Option<MotionPreset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    people: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Pixels per frame.
    #[arg(long)]
    speed: Option<f64>,
    /// Standard deviation of joint noise, pixels.
    #[arg(long)]
    jitter: Option<f64>,
    /// Probability of dropping each pose.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Args)]
#[command(after_help = "People are paired by track id; the input must carry ids.\n\
Errors: frame position out of range (3), no shared track ids (3).")]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Position of the later frame.
    #[arg(long)]
    t1: usize,
    /// Position of the earlier frame.
    #[arg(long)]
    t2: usize,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long, value_enum, default_value = "limbs")]
    kind: KindArg,
    /// Output TMLF file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = "Flow source: --flow-gt if given, else the input's own track ids if present,\n\
else none (association then relies on distance only).\n\
With several inputs, --out is a directory receiving one file per input.")]
struct TrackArgs {
    /// Input annotation files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output file (one input) or directory (several).
    #[arg(long)]
    out: PathBuf,
    /// Annotated sequence to encode flow from, standing in for the network.
    #[arg(long, value_name = "FILE")]
    flow_gt: Option<PathBuf>,
    /// Weight of the flow score; 0 gives distance-only association.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long, value_enum)]
    interpolation: Option<InterpArg>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    no_nms: bool,
    #[arg(long)]
    no_refine: bool,
    /// Sequences tracked in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// JSON report file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// PCKh threshold as a fraction of head size.
    #[arg(long, default_value_t = DEFAULT_PCKH_FACTOR)]
    pckh: f64,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    samples: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_stride: Option<usize>,
    /// Crop width and height.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    crop: Option<Vec<u32>>,
}

fn exit_code(e: &TmlError) -> u8 {
    match e {
        TmlError::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, TmlError> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::from_file)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), TmlError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| TmlError::Io { path: path.into(), source })
}

fn create_dir(path: &Path) -> Result<(), TmlError> {
    std::fs::create_dir_all(path).map_err(|source| TmlError::Io { path: path.into(), source })
}

fn cmd_synth(a: SynthArgs, mut cfg: RunConfig) -> Result<(), TmlError> {
    let s = &mut cfg.scene;
    if let Some(v) = a.preset {
        s.motion = v;
    }
    s.seed = a.seed.unwrap_or(s.seed);
    s.people = a.people.unwrap_or(s.people);
    s.frames = a.frames.unwrap_or(s.frames);
    s.speed = a.speed.unwrap_or(s.speed);
    s.jitter_sigma = a.jitter.unwrap_or(s.jitter_sigma);
    s.dropout_prob = a.dropout.unwrap_or(s.dropout_prob);
    s.image_size = (a.width.unwrap_or(s.image_size.0), a.height.unwrap_or(s.image_size.1));
    cfg.validate()?;

    let scene = generate_sequence(&cfg.scene)?;
    let detections = apply_corruption(&scene, &cfg.scene);
    let sidecar = gt_sidecar_path(&a.out);
    write_annotations(&detections, &a.out)?;
    write_annotations(&scene.ground_truth, &sidecar)?;
    if let Some(o) = scene.occlusion {
        info!("track {} hidden at frame position {}", o.track_id, o.frame);
    }
    info!("wrote {} and {}", a.out.display(), sidecar.display());
    Ok(())
}

fn cmd_encode(a: EncodeArgs, mut cfg: RunConfig) -> Result<(), TmlError> {
    if let Some(l) = a.layout {
        cfg.tracker.encoder.layout = l.into();
    }
    cfg.validate()?;
    let seq = read_annotations(&a.input)?;
    let frame = |t: usize| {
        seq.frames.get(t).ok_or_else(|| {
            TmlError::InvalidSequence(format!("frame position {t} out of range ({} frames)", seq.len()))
        })
    };
    let (later, earlier) = (frame(a.t1)?, frame(a.t2)?);
    let pairing = pairing_by_id(later, earlier);
    if pairing.is_empty() && !later.poses.is_empty() {
        return Err(TmlError::InvalidSequence("no track id shared by the two frames".into()));
    }
    let grid = match a.kind {
        KindArg::Limbs => encode_tml(later, earlier, &pairing, &seq.topology, &cfg.tracker.encoder)?,
        KindArg::Joints => encode_jointflow(later, earlier, &pairing, &seq.topology, &cfg.tracker.encoder)?,
    };
    write_flowmap(&grid, &a.out)?;
    info!("{} people paired, {} nonzero cells", pairing.len(), grid.nonzero_cells());
    Ok(())
}

fn has_ids(seq: &Sequence) -> bool {
    seq.frames.iter().flat_map(|f| &f.poses).any(|p| p.track_id.is_some())
}

fn refinement_log_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.refinement.json"))
}

fn track_one(input: &Path, out: &Path, flow_gt: Option<&Sequence>, cfg: &RunConfig) -> Result<(), TmlError> {
    let seq = read_annotations(input)?;
    let flow: Box<dyn FlowSource + '_> = match flow_gt {
        Some(gt) => {
            if gt.len() != seq.len() {
                return Err(TmlError::InvalidSequence(format!(
                    "flow sequence has {} frames, input has {}",
                    gt.len(),
                    seq.len()
                )));
            }
            Box::new(GroundTruthFlow::new(gt))
        }
        None if has_ids(&seq) => Box::new(GroundTruthFlow::new(&seq)),
        None => {
            if cfg.tracker.score.alpha > 0.0 {
                warn!("{}: no flow source; association uses distance only", input.display());
            }
            Box::new(NoFlow)
        }
    };
    let tracked = track_sequence(&seq, flow.as_ref(), &cfg.tracker)?;
    write_annotations(&tracked.sequence, out)?;
    let log: Vec<_> = tracked
        .refinement_log
        .iter()
        .map(|e| json!({"frame_index": e.frame_index, "track_id": e.track_id, "source": e.source}))
        .collect();
    write_json(&refinement_log_path(out), &json!({ "insertions": log }))?;
    info!("{} -> {} ({} refinement insertions)", input.display(), out.display(), log.len());
    Ok(())
}

fn cmd_track(a: TrackArgs, mut cfg: RunConfig) -> Result<(), TmlError> {
    let t = &mut cfg.tracker;
    t.score.alpha = a.alpha.unwrap_or(t.score.alpha);
    if let Some(l) = a.layout {
        t.encoder.layout = l.into();
    }
    if let Some(i) = a.interpolation {
        t.score.interpolation = match i {
            InterpArg::Nearest => Interpolation::Nearest,
            InterpArg::Bilinear => Interpolation::Bilinear,
        };
    }
    t.score_threshold = a.threshold.unwrap_or(t.score_threshold);
    t.nms &= !a.no_nms;
    t.refine &= !a.no_refine;
    cfg.validate()?;

    let flow_gt = a.flow_gt.as_deref().map(read_annotations).transpose()?;
    let jobs: Vec<(PathBuf, PathBuf)> = if a.inputs.len() == 1 {
        vec![(a.inputs[0].clone(), a.out.clone())]
    } else {
        if flow_gt.is_some() {
            return Err(TmlError::Config("--flow-gt applies to a single input".into()));
        }
        create_dir(&a.out)?;
        a.inputs
            .iter()
            .map(|i| (i.clone(), a.out.join(i.file_name().unwrap_or_default())))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| TmlError::Config(format!("thread pool: {e}")))?;
    // results come back in input order, so the first error reported is stable
    let results: Vec<Result<(), TmlError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(i, o)| track_one(i, o, flow_gt.as_ref(), &cfg))
            .collect()
    });
    results.into_iter().collect()
}

fn cmd_eval(a: EvalArgs) -> Result<(), TmlError> {
    if !(a.pckh > 0.0 && a.pckh.is_finite()) {
        return Err(TmlError::Config("--pckh must be positive".into()));
    }
    let gt = read_annotations(&a.gt)?;
    let pred = read_annotations(&a.pred)?;
    if gt.topology.name != pred.topology.name {
        return Err(TmlError::InvalidSequence(format!(
            "topologies differ: {} vs {}",
            gt.topology.name, pred.topology.name
        )));
    }
    let report = evaluate(&gt, &pred, a.pckh);
    print!("{}", report.format_table());
    if let Some(path) = &a.report {
        write_json(path, &serde_json::to_value(&report).expect("report serializes"))?;
    }
    Ok(())
}

fn cmd_augment(a: AugmentArgs, mut cfg: RunConfig) -> Result<(), TmlError> {
    let s = &mut cfg.sampler;
    s.rng_seed = a.seed.unwrap_or(s.rng_seed);
    s.max_stride = a.max_stride.unwrap_or(s.max_stride);
    if let Some(c) = &a.crop {
        s.crop_size = (c[0], c[1]);
    }
    cfg.validate()?;
    let seq = read_annotations(&a.input)?;
    create_dir(&a.out)?;
    let mut manifest = Vec::new();
    for i in 0..a.samples {
        let (record, f1, f2) = augment_sample(&seq, &cfg.sampler, i)?;
        let file = format!("sample_{i:05}.json");
        let mut pair = Sequence::new(seq.topology.clone());
        pair.frames = vec![f1, f2];
        write_annotations(&pair, a.out.join(&file))?;
        let mut entry = serde_json::to_value(&record).expect("record serializes");
        entry["file"] = json!(file);
        manifest.push(entry);
    }
    write_json(&a.out.join("manifest.json"), &json!({ "samples": manifest }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = load_config(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Synth(a) => cmd_synth(a, cfg),
        Command::Encode(a) => cmd_encode(a, cfg),
        Command::Track(a) => cmd_track(a, cfg),
        Command::Eval(a) => cfg.validate().and_then(|()| cmd_eval(a)),
        Command::Augment(a) => cmd_augment(a, cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
