use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use image::{Rgb, RgbImage};

use mftrack::config::RunConfig;
use mftrack::detect::{
    filter_sequence, load_detections, load_ground_truth, load_reid_sidecar, tracks_to_records, write_detections,
    write_ground_truth, DetectionFormat, DetectionSequence, DetectionSource, GtRecord,
};
use mftrack::eval::{aggregate, evaluate, generate_scene, SyntheticScene};
use mftrack::features::ReidMode;
use mftrack::frames::{save_frame, save_frames, FrameSource};
use mftrack::pipeline::{detect_sequence, frame_detections, learn_model, track_sequence, BackgroundParams};
use mftrack::tracker::Tracker;
use mftrack::Track;

#[derive(Debug, Parser)]
#[command(name = "mftrack", version, about = "Multi-feature multi-object tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track objects from a detection file or by background subtraction.
    Track(TrackArgs),
    /// Run background subtraction and write a detection file.
    Detect(DetectArgs),
    /// Score track files against ground truth with CLEAR MOT.
    Eval(EvalArgs),
    /// Render a scripted synthetic scene and its ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for every random choice.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    /// Detection file to track.
    #[arg(long, conflicts_with = "bgsub")]
    pub detections: Option<PathBuf>,
    /// Detect objects by background subtraction instead of reading a file.
    #[arg(long)]
    pub bgsub: bool,
    /// Detection file format: native or mot.
    #[arg(long)]
    pub format: Option<DetectionFormat>,
    /// The detection file holds unsupervised boxes (area filter, no confidence filter).
    #[arg(long)]
    pub unsupervised: bool,
    /// Re-identification embedding sidecar for the detection file.
    #[arg(long)]
    pub reid: Option<PathBuf>,
    /// Directory of numbered frame images.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Number of frames sampled for the background median.
    #[arg(long)]
    pub k: Option<usize>,
    /// Supervised detection file whose labels are transferred to background boxes.
    #[arg(long)]
    pub transfer: Option<PathBuf>,
    /// Write frames with track boxes drawn on them into this directory.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub transfer: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DetectionFormat>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ground-truth file; repeat together with --tracks for several videos.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Track file paired with the --gt at the same position.
    #[arg(long, required = true)]
    pub tracks: Vec<PathBuf>,
    /// IoU needed for a match.
    #[arg(long)]
    pub iou: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory; frames go to `frames/`, ground truth to `gt.txt`.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Replaces the noise seed of the scene file.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track(a) => track(a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(common.overrides.iter().map(String::as_str))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(output: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match output {
        Some(path) => {
            let mut buf = Vec::new();
            write(&mut buf)?;
            fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn open_frames(dir: &Path) -> Result<FrameSource> {
    let src = FrameSource::open(dir)?;
    if src.is_empty() {
        bail!("{}: no numbered frame images", dir.display());
    }
    Ok(src)
}

fn track(args: TrackArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let frames_dir = args.frames.clone().or_else(|| cfg.frames.clone());
    let detections = args.detections.clone().or_else(|| cfg.detections.clone());
    let transfer = args.transfer.clone().or_else(|| cfg.transfer.clone());
    let reid = args.reid.clone().or_else(|| cfg.reid.clone());
    let format = args.format.unwrap_or(cfg.detection_format);

    match (args.bgsub, detections.is_some()) {
        (true, true) => bail!("--bgsub and --detections are mutually exclusive"),
        (false, false) => bail!("either --detections or --bgsub is required"),
        _ => {}
    }
    if args.bgsub && frames_dir.is_none() {
        bail!("--bgsub needs --frames");
    }
    let source = frames_dir.as_deref().map(open_frames).transpose()?;
    let (width, height) = match &source {
        Some(s) => s.dimensions()?,
        None => (cfg.frame_width, cfg.frame_height),
    };
    let tcfg = cfg.tracker_for(width, height)?;
    let use_color = tcfg.cost.beta > 0.0;
    if use_color && source.is_none() {
        bail!("the color cost needs --frames; pass --set beta=0 (and rebalance the weights) to track without images");
    }

    let tracks: Vec<Track> = if args.bgsub {
        let source = source.as_ref().expect("checked above");
        let k = args
            .k
            .context("--bgsub needs --k (frames sampled for the background)")?;
        if reid.is_some() {
            bail!("--reid applies to a detection file, not to --bgsub");
        }
        let supervised = transfer.as_deref().map(|p| load_detections(p, format)).transpose()?;
        let params = BackgroundParams {
            k,
            seed: cfg.seed,
            diff_threshold: cfg.diff_threshold,
        };
        let model = learn_model(source.len(), &params, |i| source.load(i))?;
        let mut tracker = Tracker::new(tcfg)?;
        for f in 0..source.len() {
            let image = source.load(f)?;
            let sup = supervised.as_ref().map(|s| s.get(f).map(Vec::as_slice).unwrap_or(&[]));
            let dets = frame_detections(f, &image, &model, &cfg.filter, sup)?;
            tracker.step(f, &dets, use_color.then_some(&image))?;
        }
        tracker.finalize()
    } else {
        if transfer.is_some() {
            bail!("--transfer only applies with --bgsub");
        }
        let path = detections.expect("checked above");
        let mut seq = load_detections(&path, format)?;
        if let Some(sidecar) = &reid {
            let normalize = tcfg.cost.reid_mode == ReidMode::Corrected;
            load_reid_sidecar(sidecar, &mut seq, normalize)?;
        }
        let kind = if args.unsupervised {
            DetectionSource::Unsupervised
        } else {
            DetectionSource::Supervised
        };
        let seq = filter_sequence(&seq, kind, &cfg.filter);
        let num_frames = source.as_ref().map_or(seq.len(), FrameSource::len);
        track_sequence(&seq, num_frames, tcfg, |f| match (&source, use_color) {
            (Some(s), true) => Ok(Some(s.load(f)?)),
            _ => Ok(None),
        })?
    };

    let records = tracks_to_records(&tracks);
    if let Some(dir) = &args.overlay {
        let source = source.as_ref().context("--overlay needs --frames")?;
        write_overlays(dir, source, &records)?;
    }
    emit(args.common.output.as_deref(), |w| write_ground_truth(w, &records))
}

fn track_color(id: u64) -> Rgb<u8> {
    let h = id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    Rgb([(h >> 56) as u8 | 0x40, (h >> 48) as u8 | 0x40, (h >> 40) as u8 | 0x40])
}

fn draw_outline(img: &mut RgbImage, r: &GtRecord) {
    let (w, h) = img.dimensions();
    let clamp = |v: f64, hi: u32| (v.max(0.0) as u32).min(hi.saturating_sub(1));
    let [x0, y0, x1, y1] = r.bbox.corners();
    let (x0, x1, y0, y1) = (clamp(x0, w), clamp(x1 - 1.0, w), clamp(y0, h), clamp(y1 - 1.0, h));
    let color = track_color(r.object_id);
    for x in x0..=x1 {
        img.put_pixel(x, y0, color);
        img.put_pixel(x, y1, color);
    }
    for y in y0..=y1 {
        img.put_pixel(x0, y, color);
        img.put_pixel(x1, y, color);
    }
}

fn write_overlays(dir: &Path, source: &FrameSource, records: &[GtRecord]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for f in 0..source.len() {
        let mut img = source.load(f)?;
        for r in records.iter().filter(|r| r.frame == f) {
            draw_outline(&mut img, r);
        }
        save_frame(dir, f, &img)?;
    }
    Ok(())
}

fn detect(args: DetectArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dir = args
        .frames
        .clone()
        .or_else(|| cfg.frames.clone())
        .context("--frames is required")?;
    let source = open_frames(&dir)?;
    let transfer = args.transfer.clone().or_else(|| cfg.transfer.clone());
    let format = args.format.unwrap_or(cfg.detection_format);
    let supervised: Option<DetectionSequence> = transfer.as_deref().map(|p| load_detections(p, format)).transpose()?;
    let params = BackgroundParams {
        k: args.k,
        seed: cfg.seed,
        diff_threshold: cfg.diff_threshold,
    };
    let seq = detect_sequence(source.len(), &params, &cfg.filter, supervised.as_deref(), |i| {
        source.load(i)
    })?;
    emit(args.common.output.as_deref(), |w| write_detections(w, &seq))
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    if args.gt.len() != args.tracks.len() {
        bail!(
            "got {} --gt files but {} --tracks files",
            args.gt.len(),
            args.tracks.len()
        );
    }
    let threshold = args.iou.unwrap_or(cfg.iou_threshold);
    let mut reports = Vec::new();
    for (gt_path, hyp_path) in args.gt.iter().zip(&args.tracks) {
        let gt = load_ground_truth(gt_path)?;
        let hyp = load_ground_truth(hyp_path)?;
        let report = evaluate(&gt, &hyp, threshold).with_context(|| format!("evaluating {}", hyp_path.display()))?;
        reports.push((hyp_path.display().to_string(), report));
    }
    let (text, line) = if reports.len() == 1 {
        let r = &reports[0].1;
        (r.to_text(), r.summary_line())
    } else {
        let agg = aggregate(reports)?;
        (agg.to_text(), agg.headline())
    };
    if let Some(path) = &args.common.output {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{line}");
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scene).with_context(|| format!("reading {}", args.scene.display()))?;
    let mut scene = SyntheticScene::from_toml(&text).with_context(|| args.scene.display().to_string())?;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    let (frames, gt) = generate_scene(&scene)?;
    save_frames(&args.output.join("frames"), &frames)?;
    let gt_path = args.output.join("gt.txt");
    let mut buf = Vec::new();
    write_ground_truth(&mut buf, &gt)?;
    fs::write(&gt_path, buf).with_context(|| format!("writing {}", gt_path.display()))?;
    Ok(())
}
