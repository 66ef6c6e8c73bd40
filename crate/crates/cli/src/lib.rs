//! Command-line front end: argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use roadspeed::capture::{format_capture_time, format_records_tsv, make_record, Clock, SpeedUnit, Store};
use roadspeed::detector::{detect, format_detections_tsv, DetectorParams};
use roadspeed::imaging::{load_sequence, synth_sequence, write_sequence, Frame, Rect, SynthConfig};
use roadspeed::mblbp::{
    import_cascade_xml_with, load_model, save_model, template_cascade, tiled_features, CascadeModel, CodeOrder,
    DEFAULT_WINDOW_H, DEFAULT_WINDOW_W,
};
use roadspeed::speedpipe::{
    calibrate, finalize, track_sequence, AxisMode, CalibrationProfile, SpeedEstimate, SpeedSession,
    DEFAULT_LEGACY_COEFFICIENT,
};
use roadspeed::trainer::{load_window_dir, train_cascade, TrainConfig};
use roadspeed::uplink::{build_payload, post_upload, serve_ingest, ServeConfig, DEFAULT_MAX_BYTES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that pins the capture clock (`YYYY-MM-DD_hh_mm_ss`).
pub const NOW_ENV: &str = "ROADSPEED_NOW";

#[derive(Debug, Parser)]
#[command(name = "roadspeed", version, about = "Vehicle speed estimation from grayscale frame sequences")]
pub struct Cli {
    /// TOML file overriding built-in defaults ([detector], [speed], [uplink] tables).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic frame sequence with a moving textured patch.
    Synth(SynthArgs),
    /// Train a boosted MB-LBP cascade from positive and negative windows.
    Train(TrainArgs),
    /// Run the detector over a frame sequence and print detections as TSV.
    Detect(DetectArgs),
    /// Track the vehicle and print a speed estimate as JSON.
    Speed(SpeedArgs),
    /// Derive pixels-per-metre from a reference object.
    Calibrate(CalibrateArgs),
    /// List, search or delete saved records.
    Records(RecordsArgs),
    /// Upload all saved records to an ingest server.
    Upload(UploadArgs),
    /// Run an ingest server that accepts uploads.
    Serve(ServeArgs),
    /// Convert an OpenCV-style LBP cascade XML file to the JSON model format.
    ImportCascade(ImportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for frame_NNNN.pgm files and manifest.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 360)]
    pub height: u32,
    /// Patch rectangle in the first frame as X,Y,W,H.
    #[arg(long, default_value = "10,125,216,108", value_parser = parse_rect)]
    pub patch: Rect,
    /// Per-frame motion in pixels as DX,DY.
    #[arg(long, default_value = "10,0", value_parser = parse_pair_i32, allow_hyphen_values = true)]
    pub velocity: (i32, i32),
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, default_value_t = 96)]
    pub background: u8,
    /// Also write a template cascade that detects the patch exactly.
    #[arg(long, value_name = "FILE")]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of positive window .pgm files.
    #[arg(long)]
    pub pos: PathBuf,
    /// Directory of negative window .pgm files.
    #[arg(long)]
    pub neg: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub stages: usize,
    #[arg(long, default_value_t = 8)]
    pub max_weaks: usize,
    /// Fraction of positives each stage must keep.
    #[arg(long, default_value_t = 0.995)]
    pub tpr: f64,
    /// Feature lattice spacing in pixels.
    #[arg(long, default_value_t = 2)]
    pub feature_stride: u32,
}

#[derive(Debug, Args, Default)]
pub struct DetectorFlags {
    /// Smallest window height as a fraction of frame height [default: 0.3]
    #[arg(long)]
    pub min_size_fraction: Option<f64>,
    /// Scale step between pyramid levels [default: 1.1]
    #[arg(long)]
    pub scale_factor: Option<f64>,
    /// Minimum scan stride in pixels [default: 2]
    #[arg(long)]
    pub stride_base: Option<u32>,
    /// Raw hits needed to keep a grouped detection [default: 3]
    #[arg(long)]
    pub min_neighbors: Option<usize>,
    /// Edge tolerance for grouping, relative to mean size [default: 0.2]
    #[arg(long)]
    pub group_eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FrameInput {
    /// Frame directory (manifest.tsv or lexicographically ordered .pgm files).
    #[arg(long)]
    pub frames: PathBuf,
    /// Frame rate used when the directory has no manifest.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Cascade model JSON.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: FrameInput,
    #[command(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Args)]
pub struct SpeedArgs {
    #[command(flatten)]
    pub input: FrameInput,
    #[command(flatten)]
    pub detector: DetectorFlags,
    /// Displacement measure: euclidean or x-only [default: euclidean]
    #[arg(long)]
    pub axis: Option<AxisMode>,
    /// Detections per speed window [default: 5]
    #[arg(long)]
    pub window_len: Option<usize>,
    /// Windows needed for a complete estimate [default: 4]
    #[arg(long)]
    pub windows: Option<usize>,
    /// Multiplier for the legacy app reading [default: 0.25]
    #[arg(long)]
    pub legacy_coeff: Option<f64>,
    /// Calibration profile JSON written by `calibrate`.
    #[arg(long, conflicts_with = "px_per_m")]
    pub calibration: Option<PathBuf>,
    /// Pixels per metre [default: 704.58 px over a 4.7 m reference]
    #[arg(long)]
    pub px_per_m: Option<f64>,
    /// Location text stored with a capture [default: empty]
    #[arg(long)]
    pub location: Option<String>,
    /// Save the estimate and the annotated last detection as a record.
    #[arg(long)]
    pub capture: bool,
    /// Record store directory used with --capture.
    #[arg(long, default_value = "records")]
    pub store: PathBuf,
    /// Value stored as vehicle_speed: app_reading, px_per_s, m_per_s, km_per_h or mi_per_h [default: app_reading]
    #[arg(long, value_parser = parse_unit)]
    pub unit: Option<SpeedUnit>,
    /// Write the per-frame top-left trace as JSON.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Reference object length in pixels.
    #[arg(long, default_value_t = 704.58)]
    pub object_px: f64,
    /// Reference object length in metres.
    #[arg(long, default_value_t = 4.7)]
    pub object_m: f64,
    /// Camera-to-vehicle distance in metres.
    #[arg(long, default_value_t = 9.3)]
    pub distance_m: f64,
    /// Frame size as WxH.
    #[arg(long, default_value = "1920x1080", value_parser = parse_size)]
    pub frame: (u32, u32),
    /// Also write the profile to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecordsArgs {
    /// Record store directory.
    #[arg(long, default_value = "records")]
    pub store: PathBuf,
    #[command(subcommand)]
    pub action: RecordsAction,
}

#[derive(Debug, Subcommand)]
pub enum RecordsAction {
    /// Print every record as TSV.
    List,
    /// Print records whose capture time contains NEEDLE.
    Search {
        #[arg(long, value_name = "NEEDLE")]
        time: String,
    },
    /// Delete every record and picture.
    Delete {
        /// Confirm the deletion.
        #[arg(long)]
        yes: bool,
    },
}

#[derive(Debug, Args)]
pub struct UploadArgs {
    /// Record store directory.
    #[arg(long, default_value = "records")]
    pub store: PathBuf,
    /// Server base URL; records are posted to <URL>/uploadData.
    #[arg(long)]
    pub endpoint: String,
    /// Largest payload sent, in bytes [default: 4194304]
    #[arg(long)]
    pub max_bytes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Server-side record store directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Largest accepted request body, in bytes [default: 4194304]
    #[arg(long)]
    pub max_bytes: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Cascade XML file.
    #[arg(long)]
    pub xml: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Bit order of the source LBP codes: canonical or reversed.
    #[arg(long, default_value = "canonical", value_parser = parse_code_order)]
    pub code_order: CodeOrder,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub detector: Option<DetectorParams>,
    #[serde(default)]
    pub speed: SpeedDefaults,
    #[serde(default)]
    pub uplink: UplinkDefaults,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedDefaults {
    pub axis: Option<String>,
    pub window_len: Option<usize>,
    pub windows: Option<usize>,
    pub legacy_coeff: Option<f64>,
    pub px_per_m: Option<f64>,
    pub location: Option<String>,
    pub unit: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UplinkDefaults {
    pub max_bytes: Option<usize>,
}

/// Error split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Domain(e)
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => Ok(Rect::new(x, y, w, h)),
        _ => Err("expected X,Y,W,H".into()),
    }
}

fn parse_pair_i32(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(',').ok_or("expected DX,DY")?;
    let p = |t: &str| t.trim().parse::<i32>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let p = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_unit(s: &str) -> Result<SpeedUnit, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown unit {s:?} (expected app_reading, px_per_s, m_per_s, km_per_h or mi_per_h)"))
}

fn parse_code_order(s: &str) -> Result<CodeOrder, String> {
    match s {
        "canonical" => Ok(CodeOrder::Canonical),
        "reversed" => Ok(CodeOrder::Reversed),
        _ => Err(format!("unknown code order {s:?} (expected canonical or reversed)")),
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

fn detector_params(flags: &DetectorFlags, cfg: &FileConfig) -> Result<DetectorParams, CliError> {
    let mut p = cfg.detector.unwrap_or_default();
    if let Some(v) = flags.min_size_fraction {
        p.min_size_fraction = v;
    }
    if let Some(v) = flags.scale_factor {
        p.scale_factor = v;
    }
    if let Some(v) = flags.stride_base {
        p.stride_base = v;
    }
    if let Some(v) = flags.min_neighbors {
        p.min_neighbors = v;
    }
    if let Some(v) = flags.group_eps {
        p.group_eps = v;
    }
    p.validate().map_err(usage)?;
    Ok(p)
}

fn read_model(path: &Path) -> anyhow::Result<CascadeModel> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
    load_model(&text).with_context(|| format!("invalid model {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn load_frames(input: &FrameInput) -> anyhow::Result<Vec<Frame>> {
    let frames = load_sequence(&input.frames, input.fps)
        .with_context(|| format!("cannot load frames from {}", input.frames.display()))?;
    if frames.is_empty() {
        bail!("{} contains no frames", input.frames.display());
    }
    Ok(frames)
}

/// JPEG bytes of a grayscale frame.
pub fn encode_jpeg(frame: &Frame) -> anyhow::Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, 90)
        .encode(frame.pixels(), frame.width(), frame.height(), image::ExtendedColorType::L8)
        .context("jpeg encoding failed")?;
    Ok(out)
}

fn stored_speed(est: &SpeedEstimate, unit: SpeedUnit) -> f64 {
    match unit {
        SpeedUnit::AppReading => est.app_reading,
        SpeedUnit::PxPerS => est.median_px_s,
        SpeedUnit::MPerS => est.m_s,
        SpeedUnit::KmPerH => est.km_h,
        SpeedUnit::MiPerH => est.mi_h,
    }
}

fn json_line(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.fps > 0.0 && a.fps.is_finite()) {
        return Err(usage("--fps must be positive"));
    }
    let cfg = SynthConfig {
        frame_w: a.width,
        frame_h: a.height,
        patch: a.patch,
        velocity: a.velocity,
        n_frames: a.frames,
        frame_interval_ms: 1000.0 / a.fps,
        seed: a.seed,
        background: a.background,
    };
    let scale = a.patch.h as f64 / DEFAULT_WINDOW_H as f64;
    if a.model_out.is_some() && (DEFAULT_WINDOW_W as f64 * scale).round() as u32 != a.patch.w {
        return Err(usage(format!(
            "--model-out needs a patch with a {DEFAULT_WINDOW_W}:{DEFAULT_WINDOW_H} aspect ratio, got {}x{}",
            a.patch.w, a.patch.h
        )));
    }
    let frames = synth_sequence(&cfg).map_err(usage)?;
    write_sequence(&a.out, &frames).with_context(|| format!("cannot write {}", a.out.display()))?;
    if let Some(path) = &a.model_out {
        let ii = roadspeed::imaging::integral(&frames[0]);
        let model = template_cascade(
            &ii,
            (a.patch.x, a.patch.y),
            scale,
            (DEFAULT_WINDOW_W, DEFAULT_WINDOW_H),
            tiled_features(DEFAULT_WINDOW_W, DEFAULT_WINDOW_H, 2, 2),
        )
        .context("cannot build template model")?;
        write_file(path, save_model(&model).as_bytes())?;
    }
    writeln!(
        out,
        "wrote {} frames to {} (ground truth {:.3} px/s)",
        frames.len(),
        a.out.display(),
        cfg.ground_truth_px_s()
    )
    .context("stdout")?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = TrainConfig {
        max_weaks_per_stage: a.max_weaks,
        n_stages: a.stages,
        stage_tpr_target: a.tpr,
        feature_stride: a.feature_stride,
        ..Default::default()
    };
    cfg.validate().map_err(usage)?;
    let pos = load_window_dir(&a.pos).with_context(|| format!("cannot load positives from {}", a.pos.display()))?;
    let neg = load_window_dir(&a.neg).with_context(|| format!("cannot load negatives from {}", a.neg.display()))?;
    let model = train_cascade(&pos, &neg, &cfg).context("training failed")?;
    write_file(&a.out, save_model(&model).as_bytes())?;
    writeln!(
        out,
        "trained {} stages over {} features from {} positives and {} negatives",
        model.stages.len(),
        model.features.len(),
        pos.len(),
        neg.len()
    )
    .context("stdout")?;
    Ok(())
}

fn cmd_detect(a: &DetectArgs, cfg: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let params = detector_params(&a.detector, cfg)?;
    let model = read_model(&a.input.model)?;
    let frames = load_frames(&a.input)?;
    writeln!(out, "frame\tx\ty\tw\th\tneighbors").context("stdout")?;
    for (i, f) in frames.iter().enumerate() {
        let dets = detect(f, &model, &params).with_context(|| format!("frame {i}"))?;
        out.write_all(format_detections_tsv(i, &dets).as_bytes()).context("stdout")?;
    }
    Ok(())
}

fn cmd_speed(a: &SpeedArgs, cfg: &FileConfig, clock: &dyn Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let params = detector_params(&a.detector, cfg)?;
    let d = &cfg.speed;
    let axis = match (a.axis, &d.axis) {
        (Some(v), _) => v,
        (None, Some(s)) => s.parse().map_err(usage)?,
        (None, None) => AxisMode::Euclidean,
    };
    let unit = match (a.unit, &d.unit) {
        (Some(u), _) => u,
        (None, Some(s)) => parse_unit(s).map_err(usage)?,
        (None, None) => SpeedUnit::AppReading,
    };
    let window_len = a.window_len.or(d.window_len).unwrap_or(5);
    let windows = a.windows.or(d.windows).unwrap_or(4);
    let coeff = a.legacy_coeff.or(d.legacy_coeff).unwrap_or(DEFAULT_LEGACY_COEFFICIENT);
    if !coeff.is_finite() {
        return Err(usage("--legacy-coeff must be finite"));
    }
    let location = a.location.clone().or_else(|| d.location.clone()).unwrap_or_default();
    let mut session = SpeedSession::new(window_len, windows, axis).map_err(usage)?;
    let cal: CalibrationProfile = match (&a.calibration, a.px_per_m.or(d.px_per_m)) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let cal: CalibrationProfile =
                serde_json::from_str(&text).map_err(|e| usage(format!("invalid calibration {}: {e}", path.display())))?;
            if !(cal.px_per_m > 0.0 && cal.px_per_m.is_finite()) {
                return Err(usage("calibration px_per_m must be positive"));
            }
            cal
        }
        (None, Some(px_per_m)) => {
            if !(px_per_m > 0.0 && px_per_m.is_finite()) {
                return Err(usage("--px-per-m must be positive"));
            }
            let mut cal = calibrate(704.58, 4.7, 9.3, (1920, 1080)).expect("reference calibration");
            cal.px_per_m = px_per_m;
            cal.reference.object_px_len = px_per_m * cal.reference.object_len_m;
            cal
        }
        (None, None) => calibrate(704.58, 4.7, 9.3, (1920, 1080)).expect("reference calibration"),
    };

    let model = read_model(&a.input.model)?;
    let frames = load_frames(&a.input)?;
    let run = track_sequence(&frames, &model, &params, &mut session).context("tracking failed")?;
    if let Some(path) = &a.trace {
        write_file(path, json_line(&run.trace).as_bytes())?;
    }
    if !session.is_complete() {
        log::warn!(
            "only {} of {} windows closed; estimating from the windows available",
            session.window_speeds().len(),
            windows
        );
    }
    let est = finalize(&session, &cal, coeff).context("no speed estimate")?;
    out.write_all(json_line(&est).as_bytes()).context("stdout")?;

    if a.capture {
        let (index, det) = run.last_detection.expect("a closed window implies a detection");
        let mut picture = frames[index].clone();
        picture.draw_rect(det.rect, 255);
        let jpeg = encode_jpeg(&picture)?;
        let time = format_capture_time(&clock.now());
        let mut rec = make_record(stored_speed(&est, unit), &location, &time).context("invalid capture")?;
        rec.speed_unit = unit;
        let store = Store::open(&a.store).context("cannot open record store")?;
        let id = store.append(rec.clone(), &jpeg).context("capture failed")?;
        log::info!("saved record {id} as {}", rec.picture_filename);
        eprintln!("captured record {id}: {}", store.image_path(&rec).display());
    }
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cal = calibrate(a.object_px, a.object_m, a.distance_m, a.frame).map_err(usage)?;
    let text = json_line(&cal);
    if let Some(path) = &a.out {
        write_file(path, text.as_bytes())?;
    }
    out.write_all(text.as_bytes()).context("stdout")?;
    Ok(())
}

fn cmd_records(a: &RecordsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = Store::open(&a.store).context("cannot open record store")?;
    match &a.action {
        RecordsAction::List => {
            let rows = store.list_all().context("cannot list records")?;
            out.write_all(format_records_tsv(&rows).as_bytes()).context("stdout")?;
        }
        RecordsAction::Search { time } => {
            let rows = store.search_by_time(time).context("cannot search records")?;
            out.write_all(format_records_tsv(&rows).as_bytes()).context("stdout")?;
        }
        RecordsAction::Delete { yes } => {
            let n = store
                .delete_all(*yes)
                .map_err(|e| anyhow!(e).context("pass --yes to confirm deleting every record"))?;
            writeln!(out, "deleted {n} record(s)").context("stdout")?;
        }
    }
    Ok(())
}

fn cmd_upload(a: &UploadArgs, cfg: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let max_bytes = a.max_bytes.or(cfg.uplink.max_bytes).unwrap_or(DEFAULT_MAX_BYTES);
    let store = Store::open(&a.store).context("cannot open record store")?;
    let built = build_payload(&store).context("cannot build payload")?;
    for w in &built.warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }
    let resp = post_upload(&a.endpoint, &built.payload, max_bytes).context("upload failed")?;
    out.write_all(json_line(&resp).as_bytes()).context("stdout")?;
    Ok(())
}

fn cmd_serve(a: &ServeArgs, cfg: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mut sc = ServeConfig::new(a.bind.clone(), a.data.clone());
    sc.max_bytes = a.max_bytes.or(cfg.uplink.max_bytes).unwrap_or(DEFAULT_MAX_BYTES);
    sc.workers = a.workers;
    let server = serve_ingest(&sc).context("cannot start server")?;
    writeln!(out, "listening on {}", server.endpoint()).context("stdout")?;
    out.flush().context("stdout")?;
    server.join();
    Ok(())
}

fn cmd_import(a: &ImportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.xml).with_context(|| format!("cannot read {}", a.xml.display()))?;
    let model = import_cascade_xml_with(&text, a.code_order).with_context(|| format!("cannot import {}", a.xml.display()))?;
    write_file(&a.out, save_model(&model).as_bytes())?;
    writeln!(
        out,
        "imported {} stages and {} features ({}x{} window)",
        model.stages.len(),
        model.features.len(),
        model.window_w,
        model.window_h
    )
    .context("stdout")?;
    Ok(())
}

fn dispatch(cli: &Cli, clock: &dyn Clock, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Detect(a) => cmd_detect(a, &cfg, out),
        Command::Speed(a) => cmd_speed(a, &cfg, clock, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
        Command::Records(a) => cmd_records(a, out),
        Command::Upload(a) => cmd_upload(a, &cfg, out),
        Command::Serve(a) => cmd_serve(a, &cfg, out),
        Command::ImportCascade(a) => cmd_import(a, out),
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Errors are reported on `err`.
pub fn run<I, T>(argv: I, clock: &dyn Clock, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(&cli, clock, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Domain(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DOMAIN
        }
    }
}
