//! Capture records and their on-disk store.
//!
//! Layout of a store directory:
//!
//! ```text
//! records.log   one JSON object per line (id, vehicle_speed, location,
//!               capture_time, picture_filename, speed_unit)
//! images/       picture bytes, one file per record, named picture_filename
//! next_id       highest id ever assigned (survives delete_all)
//! ```

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TIME_FORMAT: &str = "%Y-%m-%d_%H_%M_%S";
pub const PICTURE_PREFIX: &str = "vehicle_picture_";
pub const PICTURE_EXT: &str = ".jpg";

const LOG_FILE: &str = "records.log";
const IMAGE_DIR: &str = "images";
const HIGH_WATER_FILE: &str = "next_id";

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture time {0:?} does not match YYYY-MM-DD_hh_mm_ss")]
    TimeFormat(String),
    #[error("picture {0} already exists (two captures within the same second?)")]
    Collision(String),
    #[error("delete refused: confirmation required")]
    Refused,
    #[error("corrupt record log line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("storage error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CaptureError + '_ {
    move |source| CaptureError::Io {
        path: path.to_owned(),
        source,
    }
}

/// What the stored `vehicle_speed` value measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedUnit {
    /// Legacy coefficient times median px/s.
    #[default]
    AppReading,
    PxPerS,
    MPerS,
    KmPerH,
    MiPerH,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    /// Zero until the store assigns one.
    pub id: u64,
    pub vehicle_speed: f64,
    pub location: String,
    pub capture_time: String,
    pub picture_filename: String,
    #[serde(default)]
    pub speed_unit: SpeedUnit,
}

pub fn validate_capture_time(t: &str) -> Result<(), CaptureError> {
    // the fixed-width check rejects chrono's lenient single-digit fields
    let shape_ok = t.len() == 19
        && t.bytes().enumerate().all(|(i, b)| match i {
            4 | 7 => b == b'-',
            10 | 13 | 16 => b == b'_',
            _ => b.is_ascii_digit(),
        });
    if shape_ok && NaiveDateTime::parse_from_str(t, TIME_FORMAT).is_ok() {
        Ok(())
    } else {
        Err(CaptureError::TimeFormat(t.to_string()))
    }
}

pub fn picture_filename(capture_time: &str) -> String {
    format!("{PICTURE_PREFIX}{capture_time}{PICTURE_EXT}")
}

pub fn format_capture_time(t: &NaiveDateTime) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn make_record(speed: f64, location: &str, capture_time: &str) -> Result<CaptureRecord, CaptureError> {
    validate_capture_time(capture_time)?;
    Ok(CaptureRecord {
        id: 0,
        vehicle_speed: speed,
        location: location.to_string(),
        capture_time: capture_time.to_string(),
        picture_filename: picture_filename(capture_time),
        speed_unit: SpeedUnit::AppReading,
    })
}

/// Source of capture timestamps.
pub trait Clock {
    fn now(&self) -> NaiveDateTime;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> NaiveDateTime {
        chrono::Local::now().naive_local()
    }
}

pub struct FixedClock(pub NaiveDateTime);

impl Clock for FixedClock {
    fn now(&self) -> NaiveDateTime {
        self.0
    }
}

/// Append-oriented record store. One writer at a time.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CaptureError> {
        let root = root.into();
        let images = root.join(IMAGE_DIR);
        fs::create_dir_all(&images).map_err(io_err(&images))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_dir(&self) -> PathBuf {
        self.root.join(IMAGE_DIR)
    }

    pub fn image_path(&self, rec: &CaptureRecord) -> PathBuf {
        self.image_dir().join(&rec.picture_filename)
    }

    fn log_path(&self) -> PathBuf {
        self.root.join(LOG_FILE)
    }

    fn high_water(&self) -> Result<u64, CaptureError> {
        let path = self.root.join(HIGH_WATER_FILE);
        match fs::read_to_string(&path) {
            Ok(s) => s.trim().parse().map_err(|e| CaptureError::Corrupt {
                line: 1,
                msg: format!("{}: {e}", path.display()),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn set_high_water(&self, id: u64) -> Result<(), CaptureError> {
        let path = self.root.join(HIGH_WATER_FILE);
        let tmp = self.root.join(format!("{HIGH_WATER_FILE}.tmp"));
        fs::write(&tmp, format!("{id}\n")).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn list_all(&self) -> Result<Vec<CaptureRecord>, CaptureError> {
        let path = self.log_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(vec![]),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut out: Vec<CaptureRecord> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| CaptureError::Corrupt {
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        out.sort_by_key(|r| r.id);
        Ok(out)
    }

    pub fn search_by_time(&self, needle: &str) -> Result<Vec<CaptureRecord>, CaptureError> {
        Ok(self
            .list_all()?
            .into_iter()
            .filter(|r| r.capture_time.contains(needle))
            .collect())
    }

    pub fn append(&self, record: CaptureRecord, image: &[u8]) -> Result<u64, CaptureError> {
        Ok(self.append_batch(vec![(record, image.to_vec())])?[0])
    }

    /// Appends all records or none. Images are staged under temporary names
    /// and renamed into place before the log lines are written in one go.
    pub fn append_batch(&self, batch: Vec<(CaptureRecord, Vec<u8>)>) -> Result<Vec<u64>, CaptureError> {
        if batch.is_empty() {
            return Ok(vec![]);
        }
        let existing = self.list_all()?;
        let mut seen: std::collections::HashSet<&str> =
            existing.iter().map(|r| r.picture_filename.as_str()).collect();
        for (rec, _) in &batch {
            validate_capture_time(&rec.capture_time)?;
            if rec.picture_filename.is_empty()
                || rec.picture_filename.contains(['/', '\\'])
                || rec.picture_filename.starts_with('.')
            {
                return Err(CaptureError::Collision(format!("invalid picture filename {:?}", rec.picture_filename)));
            }
            if !seen.insert(&rec.picture_filename) || self.image_dir().join(&rec.picture_filename).exists() {
                return Err(CaptureError::Collision(rec.picture_filename.clone()));
            }
        }

        let max_existing = existing.iter().map(|r| r.id).max().unwrap_or(0);
        let first = max_existing.max(self.high_water()?) + 1;

        let images = self.image_dir();
        let mut staged = Vec::with_capacity(batch.len());
        let rollback = |staged: &[(PathBuf, PathBuf)], placed: usize| {
            for (i, (tmp, dst)) in staged.iter().enumerate() {
                let _ = fs::remove_file(if i < placed { dst } else { tmp });
            }
        };
        for (i, (rec, bytes)) in batch.iter().enumerate() {
            let tmp = images.join(format!(".incoming-{}-{i}", std::process::id()));
            if let Err(e) = fs::write(&tmp, bytes) {
                staged.push((tmp.clone(), PathBuf::new()));
                rollback(&staged, 0);
                return Err(io_err(&tmp)(e));
            }
            staged.push((tmp, images.join(&rec.picture_filename)));
        }
        for i in 0..staged.len() {
            if let Err(e) = fs::rename(&staged[i].0, &staged[i].1) {
                rollback(&staged, i);
                return Err(io_err(&staged[i].1)(e));
            }
        }

        let mut lines = String::new();
        let mut ids = Vec::with_capacity(batch.len());
        for (k, (mut rec, _)) in batch.into_iter().enumerate() {
            rec.id = first + k as u64;
            ids.push(rec.id);
            lines.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            lines.push('\n');
        }
        let log = self.log_path();
        let written = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log)
            .and_then(|mut f| f.write_all(lines.as_bytes()).and_then(|_| f.sync_data()));
        if let Err(e) = written {
            rollback(&staged, staged.len());
            return Err(io_err(&log)(e));
        }
        self.set_high_water(*ids.last().expect("non-empty batch"))?;
        Ok(ids)
    }

    /// Removes every record and its picture. Ids are not reused afterwards.
    pub fn delete_all(&self, confirm: bool) -> Result<usize, CaptureError> {
        if !confirm {
            return Err(CaptureError::Refused);
        }
        let records = self.list_all()?;
        if let Some(max) = records.iter().map(|r| r.id).max() {
            if max > self.high_water()? {
                self.set_high_water(max)?;
            }
        }
        let log = self.log_path();
        fs::write(&log, "").map_err(io_err(&log))?;
        for r in &records {
            let p = self.image_path(r);
            match fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&p)(e)),
            }
        }
        Ok(records.len())
    }

    pub fn read_image(&self, rec: &CaptureRecord) -> io::Result<Vec<u8>> {
        fs::read(self.image_path(rec))
    }
}

/// Tab-separated listing in the five-column layout.
pub fn format_records_tsv(records: &[CaptureRecord]) -> String {
    let mut out = String::from("id\tvehicle_speed\tlocation\tcapture_time\tpicture_filename\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{:.1}\t{}\t{}\t{}\n",
            r.id, r.vehicle_speed, r.location, r.capture_time, r.picture_filename
        ));
    }
    out
}
