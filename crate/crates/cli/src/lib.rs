//! `artic` command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use artic_core::config::RunConfig;
use artic_core::eval::{evaluate, EvalPrediction, EvalReport, EvalThresholds};
use artic_core::fitting::fit_track;
use artic_core::schema::{
    to_jsonl, DetectionRecord, FitRecord, FitStatus, GroundTruthRecord, TrackRecord,
};
use artic_core::synth::{generate_sequence, SceneConfig};
use artic_core::tracking::{greedy_track, group_by_frame, Detection, Track};
use artic_core::{ArticulationKind, Error, Exec};

pub mod io;
pub mod render;

use io::{read_records, read_text, write_atomic};
use render::{box_center, category_color, Canvas};

pub const OUT_DIR_ENV: &str = "ARTIC_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "artic", version, about = "Fit planar articulations to per-frame detections")]
pub struct Cli {
    /// Run configuration (TOML); omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for synthetic scenes; scene i uses seed + i.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Abort on the first file containing an invalid record.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Print the effective configuration, including defaults, and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate gt.jsonl and detections.jsonl from a scene file.
    Synth { scenes: PathBuf },
    /// Link detections into tracks (tracks.jsonl).
    Track { detections: PathBuf },
    /// Track and fit detections (fits.jsonl).
    Fit { detections: PathBuf },
    /// Score fits or raw detections against ground truth (report.json).
    Eval { predictions: PathBuf, gt: PathBuf },
    /// Write one PNG overlay per frame into <out>/render.
    Render {
        /// Ground-truth file; drawn in full category colors.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Detections or fits; drawn in pale category colors.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Only this clip.
        #[arg(long)]
        clip: Option<String>,
        #[arg(long)]
        first: Option<u32>,
        #[arg(long)]
        last: Option<u32>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::from_toml(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| {
        if cfg.output.dir.is_empty() {
            PathBuf::from("out")
        } else {
            PathBuf::from(&cfg.output.dir)
        }
    })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(CliError::Usage("no subcommand given; see --help".into()));
    };
    let out = out_dir(cli, &cfg);
    match command {
        Command::Synth { scenes } => cmd_synth(scenes, cli.seed, &out),
        Command::Track { detections } => cmd_track(detections, &cfg, cli.strict, &out),
        Command::Fit { detections } => cmd_fit(detections, &cfg, cli.strict, &out),
        Command::Eval { predictions, gt } => cmd_eval(predictions, gt, &cfg, cli.strict, &out),
        Command::Render { gt, pred, clip, first, last } => {
            let range = FrameRange { clip: clip.clone(), first: *first, last: *last };
            cmd_render(gt.as_deref(), pred.as_deref(), &range, &cfg, cli.strict, &out)
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    scenes: Vec<toml::Table>,
}

/// One clip per `[[scenes]]` entry: `clip_id`, an optional `preset`
/// (`door` or `drawer`), and any scene fields overriding the preset.
pub fn parse_scenes(text: &str) -> Result<Vec<(String, SceneConfig)>, CliError> {
    let file: SceneFile = toml::from_str(text).map_err(|e| CliError::Data(format!("scene file: {e}")))?;
    let mut out = Vec::new();
    for (i, mut table) in file.scenes.into_iter().enumerate() {
        let bad = |m: String| CliError::Data(format!("scene {i}: {m}"));
        let clip_id = match table.remove("clip_id") {
            Some(toml::Value::String(s)) if !s.is_empty() => s,
            _ => return Err(bad("clip_id must be a non-empty string".into())),
        };
        let base = match table.remove("preset") {
            None => None,
            Some(toml::Value::String(s)) if s == "door" => Some(SceneConfig::door()),
            Some(toml::Value::String(s)) if s == "drawer" => Some(SceneConfig::drawer()),
            Some(v) => return Err(bad(format!("unknown preset {v}"))),
        };
        let mut merged = match base {
            Some(b) => toml::Table::try_from(b).expect("scene serializes"),
            None => toml::Table::new(),
        };
        merge(&mut merged, table);
        let scene: SceneConfig = merged.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        scene.validate().map_err(|e| bad(e.to_string()))?;
        if out.iter().any(|(c, _)| c == &clip_id) {
            return Err(bad(format!("duplicate clip_id {clip_id:?}")));
        }
        out.push((clip_id, scene));
    }
    Ok(out)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn cmd_synth(scenes: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let scenes = parse_scenes(&read_text(scenes)?)?;
    let mut gt = Vec::new();
    let mut dets = Vec::new();
    for (i, (clip, scene)) in scenes.iter().enumerate() {
        let seq = generate_sequence(scene, seed.wrapping_add(i as u64))
            .map_err(|e| CliError::Data(format!("clip {clip}: {e}")))?;
        gt.extend(seq.ground_truth.iter().map(|g| GroundTruthRecord::from_frame(clip, g)));
        dets.extend(seq.detections.iter().flatten().map(|d| DetectionRecord::from_detection(clip, d)));
    }
    write_atomic(&out.join("gt.jsonl"), to_jsonl(&gt).as_bytes())?;
    write_atomic(&out.join("detections.jsonl"), to_jsonl(&dets).as_bytes())?;
    eprintln!("wrote {} ground-truth and {} detection records to {}", gt.len(), dets.len(), out.display());
    Ok(())
}

/// Detections grouped by clip, in clip-id order.
pub fn load_clips(path: &Path, strict: bool) -> Result<BTreeMap<String, Vec<Detection>>, CliError> {
    let mut clips: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for r in read_records::<DetectionRecord>(path, strict)? {
        let d = r.to_detection()?;
        clips.entry(r.clip_id).or_default().push(d);
    }
    Ok(clips)
}

fn clip_tracks(dets: Vec<Detection>, cfg: &RunConfig) -> Vec<Track> {
    greedy_track(group_by_frame(dets), cfg.tracking.iou_threshold, cfg.tracking.metric)
}

pub fn cmd_track(detections: &Path, cfg: &RunConfig, strict: bool, out: &Path) -> Result<(), CliError> {
    let clips = load_clips(detections, strict)?;
    let mut records = Vec::new();
    for (clip, dets) in clips {
        records.extend(clip_tracks(dets, cfg).iter().map(|t| TrackRecord::from_track(&clip, t)));
    }
    write_atomic(&out.join("tracks.jsonl"), to_jsonl(&records).as_bytes())?;
    eprintln!("wrote {} tracks", records.len());
    Ok(())
}

/// Tracks and fits one clip. Clips are independent, so callers may run
/// them in parallel.
pub fn fit_clip(clip: &str, dets: Vec<Detection>, cfg: &RunConfig) -> Vec<FitRecord> {
    let Some(first) = dets.first() else { return Vec::new() };
    let k = cfg.camera_for(first.mask.width() as u32, first.mask.height() as u32);
    clip_tracks(dets, cfg)
        .iter()
        .map(|track| {
            if track.len() < cfg.fitting.min_track_length {
                return FitRecord::unfitted(clip, track, FitStatus::TooShort, "too_short".into());
            }
            match fit_track(track, &k, &cfg.fitting, Exec::default()) {
                Ok(fit) => FitRecord::fitted(clip, track, &fit, &k),
                Err(e) => FitRecord::unfitted(clip, track, FitStatus::Degenerate, e.to_string()),
            }
        })
        .collect()
}

pub fn cmd_fit(detections: &Path, cfg: &RunConfig, strict: bool, out: &Path) -> Result<(), CliError> {
    let clips: Vec<(String, Vec<Detection>)> = load_clips(detections, strict)?.into_iter().collect();
    let per_clip = Exec::default().map(&clips, |(clip, dets)| fit_clip(clip, dets.clone(), cfg));
    let records: Vec<FitRecord> = per_clip.into_iter().flatten().collect();
    write_atomic(&out.join("fits.jsonl"), to_jsonl(&records).as_bytes())?;
    let articulating = records.iter().filter(|r| r.articulating == Some(true)).count();
    eprintln!("wrote {} track fits ({articulating} articulating)", records.len());
    Ok(())
}

fn is_fits_file(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("track_id").is_some())
}

/// Fits files contribute their articulating frames; detection files are
/// scored as-is.
pub fn load_predictions(path: &Path, strict: bool) -> Result<Vec<EvalPrediction>, CliError> {
    if is_fits_file(&read_text(path)?) {
        Ok(read_records::<FitRecord>(path, strict)?.iter().flat_map(FitRecord::predictions).collect())
    } else {
        Ok(read_records::<DetectionRecord>(path, strict)?.iter().map(DetectionRecord::to_prediction).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub category: ArticulationKind,
    pub variant: String,
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub thresholds: EvalThresholds,
    pub auroc: Option<f64>,
    pub num_frames: usize,
    pub num_positive_frames: usize,
    pub ap: Vec<ApRow>,
}

impl From<EvalReport> for Report {
    fn from(r: EvalReport) -> Self {
        Self {
            thresholds: r.thresholds,
            auroc: r.auroc,
            num_frames: r.num_frames,
            num_positive_frames: r.num_positive_frames,
            ap: r
                .ap
                .into_iter()
                .map(|a| ApRow {
                    category: a.category,
                    variant: a.variant.as_str().to_string(),
                    ap: a.ap,
                    num_gt: a.num_gt,
                    num_pred: a.num_pred,
                })
                .collect(),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".to_string(), |v| format!("{:.1}", 100.0 * v))
}

pub fn cmd_eval(predictions: &Path, gt: &Path, cfg: &RunConfig, strict: bool, out: &Path) -> Result<(), CliError> {
    let preds = load_predictions(predictions, strict)?;
    let gts = read_records::<GroundTruthRecord>(gt, strict)?
        .iter()
        .map(GroundTruthRecord::to_eval)
        .collect::<Result<Vec<_>, _>>()?;
    let report: Report = evaluate(&preds, &gts, &cfg.eval, Exec::default())?.into();
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_atomic(&out.join("report.json"), json.as_bytes())?;
    let t = &report.thresholds;
    println!("thresholds: bbox_iou={} ea_score={} normal_deg={}", t.bbox_iou, t.ea_score, t.normal_deg);
    println!("AUROC: {}", fmt_opt(report.auroc));
    for row in &report.ap {
        println!("AP {:<11} {:<16} {}", row.category.as_str(), row.variant, fmt_opt(row.ap));
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct FrameRange {
    pub clip: Option<String>,
    pub first: Option<u32>,
    pub last: Option<u32>,
}

struct Overlay {
    category: ArticulationKind,
    predicted: bool,
    bbox: artic_core::Box2D,
    mask: Option<artic_core::Mask>,
    axis: Option<artic_core::ProjectedAxis>,
}

pub fn cmd_render(
    gt: Option<&Path>,
    pred: Option<&Path>,
    range: &FrameRange,
    cfg: &RunConfig,
    strict: bool,
    out: &Path,
) -> Result<(), CliError> {
    if gt.is_none() && pred.is_none() {
        return Err(CliError::Usage("render needs --gt and/or --pred".into()));
    }
    // (clip, frame) -> overlays, plus the image size per clip
    let mut frames: BTreeMap<(String, u32), Vec<Overlay>> = BTreeMap::new();
    let mut sizes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    if let Some(path) = gt {
        for r in read_records::<GroundTruthRecord>(path, strict)? {
            let g = r.to_eval()?;
            sizes.insert(r.clip_id.clone(), (g.width as usize, g.height as usize));
            frames.entry((r.clip_id.clone(), r.frame)).or_default().push(Overlay {
                category: r.category,
                predicted: false,
                bbox: g.bbox,
                mask: Some(r.mask.to_mask()?),
                axis: g.axis,
            });
        }
    }
    if let Some(path) = pred {
        if is_fits_file(&read_text(path)?) {
            for r in read_records::<FitRecord>(path, strict)? {
                for f in &r.frames {
                    frames.entry((r.clip_id.clone(), f.frame)).or_default().push(Overlay {
                        category: r.category,
                        predicted: true,
                        bbox: artic_core::Box2D { x_min: f.bbox[0], y_min: f.bbox[1], x_max: f.bbox[2], y_max: f.bbox[3] },
                        mask: None,
                        axis: f.axis.map(|a| a.to_axis()).transpose()?,
                    });
                }
            }
        } else {
            for r in read_records::<DetectionRecord>(path, strict)? {
                let d = r.to_detection()?;
                sizes.entry(r.clip_id.clone()).or_insert((d.mask.width(), d.mask.height()));
                frames.entry((r.clip_id.clone(), r.frame)).or_default().push(Overlay {
                    category: d.category,
                    predicted: true,
                    bbox: d.bbox,
                    mask: Some(d.mask),
                    axis: d.axis,
                });
            }
        }
    }
    let fallback = cfg.camera.map_or((640, 480), |k| (k.width as usize, k.height as usize));
    let mut clips: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    for (clip, f) in frames.keys() {
        let e = clips.entry(clip.clone()).or_insert((*f, *f));
        e.0 = e.0.min(*f);
        e.1 = e.1.max(*f);
    }
    if let Some(c) = &range.clip {
        if !clips.contains_key(c) {
            return Err(CliError::Data(format!("clip {c:?} not found in the inputs")));
        }
        clips.retain(|k, _| k == c);
    }
    let mut written = 0;
    for (clip, (lo, hi)) in &clips {
        let first = range.first.unwrap_or(*lo);
        let last = range.last.unwrap_or(*hi);
        if first > last || first < *lo || last > *hi {
            return Err(CliError::Data(format!("clip {clip}: frames {first}..={last} outside {lo}..={hi}")));
        }
        let (w, h) = sizes.get(clip).copied().unwrap_or(fallback);
        for frame in first..=last {
            let mut canvas = Canvas::new(w, h);
            for o in frames.get(&(clip.clone(), frame)).map(Vec::as_slice).unwrap_or(&[]) {
                let c = category_color(o.category, o.predicted);
                if let Some(m) = &o.mask {
                    canvas.contour(m, c);
                }
                canvas.rect(&o.bbox, c);
                if let Some(a) = &o.axis {
                    canvas.axis(a, o.category, box_center(&o.bbox), c);
                }
            }
            write_atomic(&out.join("render").join(format!("{clip}_{frame:05}.png")), &canvas.to_png())?;
            written += 1;
        }
    }
    eprintln!("wrote {written} images to {}", out.join("render").display());
    Ok(())
}
