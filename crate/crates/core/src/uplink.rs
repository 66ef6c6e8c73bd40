//! Batched upload of saved records and the matching ingest server.
//!
//! Wire protocol: `POST <endpoint>/uploadData` with `Content-Type:
//! application/json`. The body is an [`UploadPayload`]; the reply is an
//! [`UploadResponse`]. Pictures travel as standard padded Base64 with every
//! `/` replaced by `_`.

use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD;
use base64::{DecodeError, Engine as _};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tiny_http::{Header, Method, Response, Server};

use crate::capture::{CaptureError, CaptureRecord, SpeedUnit, Store};

/// Default request ceiling (4 MiB).
pub const DEFAULT_MAX_BYTES: usize = 4 * 1024 * 1024;
pub const UPLOAD_PATH: &str = "/uploadData";

#[derive(Debug, Error)]
pub enum UplinkError {
    #[error("invalid picture encoding at offset {offset}: {msg}")]
    Decode { offset: usize, msg: String },
    #[error("payload of {size} bytes exceeds the {max}-byte limit")]
    TooLarge { size: usize, max: usize },
    #[error("server answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Storage(#[from] CaptureError),
    #[error("server error: {0}")]
    Server(String),
}

pub fn encode_image(bytes: &[u8]) -> String {
    STANDARD.encode(bytes).replace('/', "_")
}

pub fn decode_image(text: &str) -> Result<Vec<u8>, UplinkError> {
    if let Some(offset) = text.find('/') {
        return Err(UplinkError::Decode {
            offset,
            msg: "'/' is not part of the substituted alphabet".into(),
        });
    }
    STANDARD.decode(text.replace('_', "/")).map_err(|e| {
        let offset = match e {
            DecodeError::InvalidByte(o, _) | DecodeError::InvalidLastSymbol { offset: o, .. } => o,
            DecodeError::InvalidLength(len) => len,
            DecodeError::InvalidPadding => text.len(),
        };
        UplinkError::Decode {
            offset,
            msg: e.to_string(),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UploadRecord {
    pub vehicle_speed: f64,
    pub location: String,
    pub capture_time: String,
    pub picture_filename: String,
    pub picture_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UploadPayload {
    pub records: Vec<UploadRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub message: String,
    pub received: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPayload {
    pub payload: UploadPayload,
    /// Client-side notes, e.g. records whose picture file is missing.
    pub warnings: Vec<String>,
}

/// One entry per stored record in id order. A missing picture yields an
/// empty `pictureBase64` and a warning.
pub fn build_payload(store: &Store) -> Result<BuiltPayload, UplinkError> {
    let mut warnings = Vec::new();
    let records = store
        .list_all()?
        .into_iter()
        .map(|r| {
            let picture_base64 = match store.read_image(&r) {
                Ok(bytes) => encode_image(&bytes),
                Err(e) => {
                    warnings.push(format!("record {}: picture {} unavailable ({e})", r.id, r.picture_filename));
                    String::new()
                }
            };
            UploadRecord {
                vehicle_speed: r.vehicle_speed,
                location: r.location,
                capture_time: r.capture_time,
                picture_filename: r.picture_filename,
                picture_base64,
            }
        })
        .collect();
    Ok(BuiltPayload {
        payload: UploadPayload { records },
        warnings,
    })
}

pub fn upload_url(endpoint: &str) -> String {
    format!("{}{UPLOAD_PATH}", endpoint.trim_end_matches('/'))
}

/// POSTs the payload. Oversize payloads fail before any connection is made.
pub fn post_upload(endpoint: &str, payload: &UploadPayload, max_bytes: usize) -> Result<UploadResponse, UplinkError> {
    let body = serde_json::to_vec(payload).expect("payload serializes");
    if body.len() > max_bytes {
        return Err(UplinkError::TooLarge {
            size: body.len(),
            max: max_bytes,
        });
    }
    let mut resp = ureq::post(upload_url(endpoint))
        .config()
        .http_status_as_error(false)
        .build()
        .header("Content-Type", "application/json")
        .send(&body[..])
        .map_err(|e| UplinkError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| UplinkError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(UplinkError::Status { status, body: text });
    }
    serde_json::from_str(&text).map_err(|e| UplinkError::Protocol(format!("{e}: {text:?}")))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub max_bytes: usize,
    pub workers: usize,
}

impl ServeConfig {
    pub fn new(bind: impl Into<String>, data_dir: impl Into<PathBuf>) -> Self {
        ServeConfig {
            bind: bind.into(),
            data_dir: data_dir.into(),
            max_bytes: DEFAULT_MAX_BYTES,
            workers: 4,
        }
    }
}

/// Running ingest server. Dropping the handle stops it.
pub struct ServerHandle {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

struct Ingest {
    store: Mutex<Store>,
    max_bytes: usize,
}

type Reply = (u16, String);

fn json_reply(status: u16, message: impl Into<String>, received: usize) -> Reply {
    let body = serde_json::to_string(&UploadResponse {
        message: message.into(),
        received,
    })
    .expect("response serializes");
    (status, body)
}

impl Ingest {
    fn handle(&self, req: &mut tiny_http::Request) -> Reply {
        let path = req.url().split('?').next().unwrap_or("");
        if path != UPLOAD_PATH {
            return json_reply(404, format!("no resource at {path}"), 0);
        }
        if *req.method() != Method::Post {
            return json_reply(405, "uploadData accepts POST only", 0);
        }
        if req.body_length().is_some_and(|n| n > self.max_bytes) {
            return json_reply(413, format!("payload exceeds {} bytes", self.max_bytes), 0);
        }
        let mut body = Vec::new();
        let limit = self.max_bytes as u64 + 1;
        if let Err(e) = req.as_reader().take(limit).read_to_end(&mut body) {
            return json_reply(400, format!("failed to read body: {e}"), 0);
        }
        if body.len() > self.max_bytes {
            return json_reply(413, format!("payload exceeds {} bytes", self.max_bytes), 0);
        }
        let payload: UploadPayload = match serde_json::from_slice(&body) {
            Ok(p) => p,
            Err(e) => return json_reply(400, format!("malformed payload: {e}"), 0),
        };
        let mut batch = Vec::with_capacity(payload.records.len());
        for r in payload.records {
            let bytes = match decode_image(&r.picture_base64) {
                Ok(b) => b,
                Err(e) => return json_reply(400, format!("{}: {e}", r.picture_filename), 0),
            };
            let rec = CaptureRecord {
                id: 0,
                vehicle_speed: r.vehicle_speed,
                location: r.location,
                capture_time: r.capture_time,
                picture_filename: r.picture_filename,
                speed_unit: SpeedUnit::AppReading,
            };
            batch.push((rec, bytes));
        }
        let n = batch.len();
        let store = self.store.lock().unwrap_or_else(|p| p.into_inner());
        match store.append_batch(batch) {
            Ok(_) => json_reply(200, format!("Received {n} record(s)"), n),
            Err(e @ CaptureError::Collision(_)) => json_reply(409, e.to_string(), 0),
            Err(e @ CaptureError::TimeFormat(_)) => json_reply(400, e.to_string(), 0),
            Err(e) => json_reply(500, e.to_string(), 0),
        }
    }
}

/// Starts the ingest server on `config.bind` (port 0 picks a free port).
pub fn serve_ingest(config: &ServeConfig) -> Result<ServerHandle, UplinkError> {
    let store = Store::open(&config.data_dir)?;
    let server = Arc::new(Server::http(&config.bind).map_err(|e| UplinkError::Server(e.to_string()))?);
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| UplinkError::Server("server is not bound to an IP address".into()))?;
    let ingest = Arc::new(Ingest {
        store: Mutex::new(store),
        max_bytes: config.max_bytes,
    });
    let workers = (0..config.workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let ingest = Arc::clone(&ingest);
            std::thread::spawn(move || {
                while let Ok(mut req) = server.recv() {
                    let (status, body) = ingest.handle(&mut req);
                    log::info!("{} {} -> {status}", req.method(), req.url());
                    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let resp = Response::from_string(body).with_status_code(status).with_header(header);
                    if let Err(e) = req.respond(resp) {
                        log::warn!("failed to send response: {e}");
                    }
                }
            })
        })
        .collect();
    Ok(ServerHandle { server, addr, workers })
}
