//! Camera-based vehicle speed estimation.
//!
//! The pipeline runs grayscale frames through an MB-LBP boosted cascade,
//! tracks the selected detection across frames, and converts displacement
//! over time into a calibrated ground speed. Captures are kept in a local
//! record store and can be uploaded to a remote ingest server.

pub mod capture;
pub mod detector;
pub mod imaging;
pub mod mblbp;
pub mod speedpipe;
pub mod trainer;
pub mod uplink;

pub use capture::{CaptureError, CaptureRecord, Clock, FixedClock, SpeedUnit, Store, SystemClock};
pub use detector::{detect, scale_schedule, scan, Candidate, DetectError, Detection, DetectorParams};
pub use imaging::{Frame, ImageError, IntegralImage, Rect, SynthConfig};
pub use mblbp::{CascadeModel, CodeSubset, MbLbpError, MbLbpFeature, Stage, WeakClassifier};
pub use speedpipe::{
    AxisMode, CalibrationProfile, CalibrationReference, SpeedError, SpeedEstimate, SpeedSession,
};
pub use trainer::{train_cascade, Label, TrainConfig, TrainError, TrainSample};
pub use uplink::{UplinkError, UploadPayload, UploadRecord, UploadResponse};
