//! Displacement-based speed estimation.
//!
//! The tracked top-left corner is accumulated detection by detection. Every
//! `window_len` detections close a window whose speed is the displacement
//! between the window's first and last samples over their time difference
//! (so a 5-detection window spans 4 inter-detection intervals). Window
//! speeds are rounded to whole px/s. After `windows_needed` windows the
//! median is the estimate, converted to metric units with a calibrated
//! pixels-per-metre coefficient.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{detect, select_vehicle, DetectError, DetectorParams};
use crate::imaging::Frame;
use crate::mblbp::CascadeModel;

pub const KMH_PER_MS: f64 = 3.6;
pub const KM_PER_MILE: f64 = 1.609344;
pub const DEFAULT_LEGACY_COEFFICIENT: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum SpeedError {
    #[error("timestamps must increase: {prev} ms then {next} ms")]
    TimeOrder { prev: u64, next: u64 },
    #[error("median of an empty list")]
    Empty,
    #[error("no speed window closed; at least {window_len} detections are required")]
    InsufficientData { window_len: usize },
    #[error("session already holds all {0} windows")]
    Complete(usize),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMode {
    #[default]
    Euclidean,
    /// Horizontal displacement only.
    XOnly,
}

impl std::str::FromStr for AxisMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(AxisMode::Euclidean),
            "x-only" | "x_only" => Ok(AxisMode::XOnly),
            _ => Err(format!("unknown axis mode {s:?} (expected euclidean or x-only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub point: (f64, f64),
    pub t_ms: u64,
}

/// Pixel speed between two tracked positions, in px/s.
pub fn window_speed(p1: (f64, f64), t1: u64, p2: (f64, f64), t2: u64, axis: AxisMode) -> Result<f64, SpeedError> {
    if t2 <= t1 {
        return Err(SpeedError::TimeOrder { prev: t1, next: t2 });
    }
    let dx = p2.0 - p1.0;
    let dy = p2.1 - p1.1;
    let dist = match axis {
        AxisMode::Euclidean => (dx * dx + dy * dy).sqrt(),
        AxisMode::XOnly => dx.abs(),
    };
    Ok(dist / (t2 - t1) as f64 * 1000.0)
}

/// Median; even-length input averages the middle pair.
pub fn median(values: &[f64]) -> Result<f64, SpeedError> {
    if values.is_empty() {
        return Err(SpeedError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedStatus {
    Collecting,
    WindowClosed { speed_px_s: f64 },
    Complete,
}

#[derive(Debug, Clone)]
pub struct SpeedSession {
    window_len: usize,
    windows_needed: usize,
    axis: AxisMode,
    samples: Vec<TrackSample>,
    window_start: Option<TrackSample>,
    in_window: usize,
    window_speeds: Vec<f64>,
    raw_speeds: Vec<f64>,
}

impl Default for SpeedSession {
    fn default() -> Self {
        SpeedSession::new(5, 4, AxisMode::Euclidean).expect("default session parameters are valid")
    }
}

impl SpeedSession {
    pub fn new(window_len: usize, windows_needed: usize, axis: AxisMode) -> Result<Self, SpeedError> {
        if window_len < 2 {
            return Err(SpeedError::Domain("window length must be at least 2".into()));
        }
        if windows_needed < 1 {
            return Err(SpeedError::Domain("at least one window is required".into()));
        }
        Ok(SpeedSession {
            window_len,
            windows_needed,
            axis,
            samples: Vec::new(),
            window_start: None,
            in_window: 0,
            window_speeds: Vec::new(),
            raw_speeds: Vec::new(),
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn windows_needed(&self) -> usize {
        self.windows_needed
    }

    pub fn axis(&self) -> AxisMode {
        self.axis
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    /// Closed window speeds, rounded to whole px/s.
    pub fn window_speeds(&self) -> &[f64] {
        &self.window_speeds
    }

    /// Closed window speeds before rounding.
    pub fn raw_window_speeds(&self) -> &[f64] {
        &self.raw_speeds
    }

    pub fn is_complete(&self) -> bool {
        self.window_speeds.len() >= self.windows_needed
    }

    pub fn feed(&mut self, sample: TrackSample) -> Result<FeedStatus, SpeedError> {
        if self.is_complete() {
            return Err(SpeedError::Complete(self.windows_needed));
        }
        if let Some(last) = self.samples.last() {
            if sample.t_ms <= last.t_ms {
                return Err(SpeedError::TimeOrder {
                    prev: last.t_ms,
                    next: sample.t_ms,
                });
            }
        }
        self.samples.push(sample);
        let start = *self.window_start.get_or_insert(sample);
        self.in_window += 1;
        if self.in_window < self.window_len {
            return Ok(FeedStatus::Collecting);
        }
        let raw = window_speed(start.point, start.t_ms, sample.point, sample.t_ms, self.axis)?;
        self.raw_speeds.push(raw);
        self.window_speeds.push(raw.round());
        self.window_start = None;
        self.in_window = 0;
        Ok(if self.is_complete() {
            FeedStatus::Complete
        } else {
            FeedStatus::WindowClosed { speed_px_s: raw.round() }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationReference {
    pub object_px_len: f64,
    pub object_len_m: f64,
    pub vehicle_distance_m: f64,
    pub frame: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationProfile {
    pub px_per_m: f64,
    pub reference: CalibrationReference,
}

/// Pixels per metre from an object of known length measured in the frame.
pub fn calibrate(
    object_px_len: f64,
    object_len_m: f64,
    vehicle_distance_m: f64,
    frame: (u32, u32),
) -> Result<CalibrationProfile, SpeedError> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(object_px_len) || !positive(object_len_m) || !positive(vehicle_distance_m) {
        return Err(SpeedError::Domain("calibration lengths must be positive".into()));
    }
    if frame.0 == 0 || frame.1 == 0 {
        return Err(SpeedError::Domain("calibration frame must be non-empty".into()));
    }
    Ok(CalibrationProfile {
        px_per_m: object_px_len / object_len_m,
        reference: CalibrationReference {
            object_px_len,
            object_len_m,
            vehicle_distance_m,
            frame,
        },
    })
}

pub fn convert_ground_speed(mi_h: f64) -> f64 {
    mi_h * KM_PER_MILE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeedEstimate {
    pub median_px_s: f64,
    pub window_speeds_px_s: Vec<f64>,
    pub raw_window_speeds_px_s: Vec<f64>,
    pub m_s: f64,
    pub km_h: f64,
    pub mi_h: f64,
    /// `legacy_coefficient * median_px_s`, kept for comparison with older readings.
    pub app_reading: f64,
    pub legacy_coefficient: f64,
    pub calibration: CalibrationProfile,
}

impl SpeedEstimate {
    pub fn from_median(median_px_s: f64, cal: &CalibrationProfile, legacy_coefficient: f64) -> Self {
        let m_s = median_px_s / cal.px_per_m;
        let km_h = KMH_PER_MS * m_s;
        SpeedEstimate {
            median_px_s,
            window_speeds_px_s: vec![],
            raw_window_speeds_px_s: vec![],
            m_s,
            km_h,
            mi_h: km_h / KM_PER_MILE,
            app_reading: legacy_coefficient * median_px_s,
            legacy_coefficient,
            calibration: *cal,
        }
    }
}

/// Median over however many windows have closed.
pub fn finalize(session: &SpeedSession, cal: &CalibrationProfile, legacy_coefficient: f64) -> Result<SpeedEstimate, SpeedError> {
    if session.window_speeds.is_empty() {
        return Err(SpeedError::InsufficientData {
            window_len: session.window_len,
        });
    }
    let mut est = SpeedEstimate::from_median(median(&session.window_speeds)?, cal, legacy_coefficient);
    est.window_speeds_px_s = session.window_speeds.clone();
    est.raw_window_speeds_px_s = session.raw_speeds.clone();
    Ok(est)
}

/// Per-frame tracking record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub frame_index: usize,
    pub t_ms: u64,
    /// Top-left corner of the tracked detection, if any.
    pub top_left: Option<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct TrackRun {
    pub trace: Vec<TraceEntry>,
    /// Index of the frame whose detection completed the session, if reached.
    pub completed_at: Option<usize>,
    /// Index of the last frame with a detection.
    pub last_detection: Option<(usize, crate::detector::Detection)>,
}

/// Detects the vehicle in each frame and feeds its top-left corner to the
/// session until it completes or the frames run out.
pub fn track_sequence(
    frames: &[Frame],
    model: &CascadeModel,
    params: &DetectorParams,
    session: &mut SpeedSession,
) -> Result<TrackRun, SpeedError> {
    let mut run = TrackRun {
        trace: Vec::with_capacity(frames.len()),
        completed_at: None,
        last_detection: None,
    };
    for (i, f) in frames.iter().enumerate() {
        let vehicle = select_vehicle(&detect(f, model, params)?);
        run.trace.push(TraceEntry {
            frame_index: i,
            t_ms: f.timestamp_ms,
            top_left: vehicle.map(|d| (d.rect.x, d.rect.y)),
        });
        if let Some(d) = vehicle {
            run.last_detection = Some((i, d));
            let status = session.feed(TrackSample {
                point: (d.rect.x as f64, d.rect.y as f64),
                t_ms: f.timestamp_ms,
            })?;
            if status == FeedStatus::Complete {
                run.completed_at = Some(i);
                break;
            }
        }
    }
    Ok(run)
}
