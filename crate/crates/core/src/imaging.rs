//! Grayscale frames, integral images, portable graymap I/O and a synthetic
//! moving-patch sequence generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest accepted frame dimension on either axis.
pub const MAX_DIM: u32 = 8192;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pgm format error in {field}: {msg}")]
    Format { field: &'static str, msg: String },
    #[error("unsupported maxval {0} (only 8-bit graymaps are supported)")]
    UnsupportedMaxval(u32),
    #[error("invalid frame dimensions {width}x{height}")]
    Dimensions { width: u32, height: u32 },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    PixelCount { expected: usize, got: usize },
    #[error("rect {rect:?} lies outside {width}x{height} image")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("synthetic sequence configuration: {0}")]
    Config(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("timestamps must be strictly increasing (frame {index}: {prev} -> {next})")]
    TimeOrder { index: usize, prev: u64, next: u64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Axis-aligned rectangle with top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    /// True when the rect is non-empty and fits inside a `width`x`height` image.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && (self.x as u64 + self.w as u64) <= width as u64
            && (self.y as u64 + self.h as u64) <= height as u64
    }
}

/// 8-bit single-channel raster with a capture timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
            return Err(ImageError::Dimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImageError::PixelCount {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
            timestamp_ms: 0,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self, ImageError> {
        Frame::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn with_timestamp(mut self, timestamp_ms: u64) -> Self {
        self.timestamp_ms = timestamp_ms;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }

    /// Copies out the sub-image covered by `r` as a new frame.
    pub fn crop(&self, r: Rect) -> Result<Frame, ImageError> {
        if !r.fits(self.width, self.height) {
            return Err(ImageError::OutOfBounds {
                rect: r,
                width: self.width,
                height: self.height,
            });
        }
        let mut out = Vec::with_capacity(r.area() as usize);
        for y in r.y..r.bottom() {
            let start = y as usize * self.width as usize + r.x as usize;
            out.extend_from_slice(&self.pixels[start..start + r.w as usize]);
        }
        Frame::new(r.w, r.h, out)
    }

    /// Draws a one-pixel outline of `r`, clipped to the frame.
    pub fn draw_rect(&mut self, r: Rect, value: u8) {
        if r.w == 0 || r.h == 0 || r.x >= self.width || r.y >= self.height {
            return;
        }
        let x1 = (r.x + r.w - 1).min(self.width - 1);
        let y1 = (r.y + r.h - 1).min(self.height - 1);
        for x in r.x..=x1 {
            self.set(x, r.y, value);
            self.set(x, y1, value);
        }
        for y in r.y..=y1 {
            self.set(r.x, y, value);
            self.set(x1, y, value);
        }
    }
}

/// Prefix-sum table over a frame: `sum(r, c)` is the pixel sum of rows
/// `[0, r)` by columns `[0, c)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sums: Vec<u64>,
}

impl IntegralImage {
    pub fn new(frame: &Frame) -> Self {
        let w = frame.width as usize;
        let h = frame.height as usize;
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            let src = &frame.pixels[y * w..(y + 1) * w];
            let (above, cur) = sums.split_at_mut((y + 1) * stride);
            let above = &above[y * stride..];
            for x in 0..w {
                row += src[x] as u64;
                cur[x + 1] = above[x + 1] + row;
            }
        }
        IntegralImage {
            width: frame.width,
            height: frame.height,
            sums,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Table entry at row `r`, column `c` (both in `0..=height`, `0..=width`).
    #[inline]
    pub fn at(&self, r: u32, c: u32) -> u64 {
        self.sums[r as usize * (self.width as usize + 1) + c as usize]
    }

    pub fn total(&self) -> u64 {
        self.at(self.height, self.width)
    }

    /// Exact pixel sum inside `r`.
    pub fn rect_sum(&self, r: Rect) -> Result<u64, ImageError> {
        if !r.fits(self.width, self.height) {
            return Err(ImageError::OutOfBounds {
                rect: r,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.sum_unchecked(r.x, r.y, r.w, r.h))
    }

    /// Four-lookup block sum without bounds validation. Callers guarantee the
    /// block lies inside the image.
    #[inline]
    pub fn sum_unchecked(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        let stride = self.width as usize + 1;
        let (x0, y0) = (x as usize, y as usize);
        let (x1, y1) = (x0 + w as usize, y0 + h as usize);
        let s = &self.sums;
        s[y1 * stride + x1] + s[y0 * stride + x0] - s[y0 * stride + x1] - s[y1 * stride + x0]
    }
}

pub fn integral(frame: &Frame) -> IntegralImage {
    IntegralImage::new(frame)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::Format {
                field,
                msg: "expected a decimal number".into(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Format {
                field,
                msg: "number out of range".into(),
            })
    }
}

/// Parses a binary (P5) portable graymap. The timestamp is left at zero.
pub fn load_pgm(bytes: &[u8]) -> Result<Frame, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageError::Format {
            field: "magic",
            msg: "expected binary graymap magic P5".into(),
        });
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if maxval == 0 {
        return Err(ImageError::Format {
            field: "maxval",
            msg: "maxval must be positive".into(),
        });
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(rd.pos) {
        Some(b) if b.is_ascii_whitespace() => rd.pos += 1,
        _ => {
            return Err(ImageError::Format {
                field: "maxval",
                msg: "missing whitespace after maxval".into(),
            })
        }
    }
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(ImageError::Dimensions { width, height });
    }
    let n = width as usize * height as usize;
    let payload = &bytes[rd.pos..];
    if payload.len() < n {
        return Err(ImageError::Format {
            field: "payload",
            msg: format!("truncated raster: {} of {} bytes", payload.len(), n),
        });
    }
    Frame::new(width, height, payload[..n].to_vec())
}

pub fn save_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn read_pgm_file(path: &Path) -> Result<Frame, ImageError> {
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_owned(),
        source,
    })?;
    load_pgm(&bytes)
}

pub fn write_pgm_file(path: &Path, frame: &Frame) -> Result<(), ImageError> {
    fs::write(path, save_pgm(frame)).map_err(|source| ImageError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parameters for [`synth_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub frame_w: u32,
    pub frame_h: u32,
    /// Patch placement in the first frame.
    pub patch: Rect,
    /// Per-frame translation in pixels.
    pub velocity: (i32, i32),
    pub n_frames: usize,
    /// Frame spacing; fractional intervals are rounded per frame.
    pub frame_interval_ms: f64,
    pub seed: u64,
    pub background: u8,
}

impl SynthConfig {
    /// Patch position at frame `k`.
    pub fn patch_at(&self, k: usize) -> (i64, i64) {
        (
            self.patch.x as i64 + self.velocity.0 as i64 * k as i64,
            self.patch.y as i64 + self.velocity.1 as i64 * k as i64,
        )
    }

    pub fn timestamp_at(&self, k: usize) -> u64 {
        (k as f64 * self.frame_interval_ms).round() as u64
    }

    /// Ground-truth speed of the patch in pixels per second.
    pub fn ground_truth_px_s(&self) -> f64 {
        let (vx, vy) = (self.velocity.0 as f64, self.velocity.1 as f64);
        (vx * vx + vy * vy).sqrt() * (1000.0 / self.frame_interval_ms)
    }

    fn validate(&self) -> Result<(), ImageError> {
        if self.frame_w == 0 || self.frame_h == 0 || self.frame_w > MAX_DIM || self.frame_h > MAX_DIM {
            return Err(ImageError::Dimensions {
                width: self.frame_w,
                height: self.frame_h,
            });
        }
        if self.patch.w == 0 || self.patch.h == 0 {
            return Err(ImageError::Config("patch must be non-empty".into()));
        }
        if !(self.frame_interval_ms > 0.0 && self.frame_interval_ms.is_finite()) {
            return Err(ImageError::Config("frame interval must be positive".into()));
        }
        for k in [0, self.n_frames.saturating_sub(1)] {
            let (x, y) = self.patch_at(k);
            if x < 0
                || y < 0
                || x + self.patch.w as i64 > self.frame_w as i64
                || y + self.patch.h as i64 > self.frame_h as i64
            {
                return Err(ImageError::Config(format!(
                    "patch leaves the {}x{} frame at frame {k} (position {x},{y})",
                    self.frame_w, self.frame_h
                )));
            }
        }
        Ok(())
    }

    /// The deterministic patch texture (same for every frame).
    pub fn texture(&self) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.patch.w as usize * self.patch.h as usize;
        // high-contrast cells of 4x4 pixels, avoiding the background level
        let cells_w = self.patch.w.div_ceil(4) as usize;
        let cells_h = self.patch.h.div_ceil(4) as usize;
        let cells: Vec<u8> = (0..cells_w * cells_h)
            .map(|_| if rng.gen_bool(0.5) { rng.gen_range(200..=255) } else { rng.gen_range(0..=40) })
            .collect();
        let mut tex = Vec::with_capacity(n);
        for y in 0..self.patch.h as usize {
            for x in 0..self.patch.w as usize {
                let cell = cells[(y / 4) * cells_w + x / 4];
                tex.push(cell.saturating_add(rng.gen_range(0..8)));
            }
        }
        tex
    }
}

/// Generates frames with a textured patch translating over a flat background.
pub fn synth_sequence(cfg: &SynthConfig) -> Result<Vec<Frame>, ImageError> {
    cfg.validate()?;
    let tex = cfg.texture();
    let (pw, ph) = (cfg.patch.w as usize, cfg.patch.h as usize);
    let fw = cfg.frame_w as usize;
    (0..cfg.n_frames)
        .map(|k| {
            let mut px = vec![cfg.background; fw * cfg.frame_h as usize];
            let (x0, y0) = cfg.patch_at(k);
            let (x0, y0) = (x0 as usize, y0 as usize);
            for row in 0..ph {
                let dst = (y0 + row) * fw + x0;
                px[dst..dst + pw].copy_from_slice(&tex[row * pw..(row + 1) * pw]);
            }
            Ok(Frame::new(cfg.frame_w, cfg.frame_h, px)?.with_timestamp(cfg.timestamp_at(k)))
        })
        .collect()
}

/// Manifest file name inside a frame directory.
pub const MANIFEST: &str = "manifest.tsv";

/// Parses `<filename>\t<timestamp_ms>` lines. Blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, u64)>, ImageError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, ts) = line.split_once('\t').ok_or_else(|| ImageError::Manifest {
            line: i + 1,
            msg: "expected <filename>\\t<timestamp_ms>".into(),
        })?;
        let ts = ts.trim().parse::<u64>().map_err(|e| ImageError::Manifest {
            line: i + 1,
            msg: format!("bad timestamp {ts:?}: {e}"),
        })?;
        out.push((name.to_string(), ts));
    }
    Ok(out)
}

pub fn format_manifest(entries: &[(String, u64)]) -> String {
    entries.iter().map(|(n, t)| format!("{n}\t{t}\n")).collect()
}

/// Loads a frame directory. With a manifest, its order and timestamps win;
/// otherwise `.pgm` files are taken in lexicographic order at uniform `fps`.
pub fn load_sequence(dir: &Path, fps: Option<f64>) -> Result<Vec<Frame>, ImageError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| ImageError::Io { path, source }
    };
    let manifest = dir.join(MANIFEST);
    let frames = if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(io(&manifest))?;
        parse_manifest(&text)?
            .into_iter()
            .map(|(name, ts)| Ok(read_pgm_file(&dir.join(name))?.with_timestamp(ts)))
            .collect::<Result<Vec<_>, ImageError>>()?
    } else {
        let fps = fps.ok_or_else(|| {
            ImageError::Config(format!("{} has no {MANIFEST}; a frame rate is required", dir.display()))
        })?;
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(ImageError::Config("frame rate must be positive".into()));
        }
        let mut names: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
            .collect();
        names.sort();
        names
            .iter()
            .enumerate()
            .map(|(k, p)| Ok(read_pgm_file(p)?.with_timestamp((k as f64 * 1000.0 / fps).round() as u64)))
            .collect::<Result<Vec<_>, ImageError>>()?
    };
    for (i, pair) in frames.windows(2).enumerate() {
        if pair[1].timestamp_ms <= pair[0].timestamp_ms {
            return Err(ImageError::TimeOrder {
                index: i + 1,
                prev: pair[0].timestamp_ms,
                next: pair[1].timestamp_ms,
            });
        }
    }
    Ok(frames)
}

/// Writes frames as `frame_NNNN.pgm` plus a manifest.
pub fn write_sequence(dir: &Path, frames: &[Frame]) -> Result<(), ImageError> {
    fs::create_dir_all(dir).map_err(|source| ImageError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut entries = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let name = format!("frame_{k:04}.pgm");
        write_pgm_file(&dir.join(&name), f)?;
        entries.push((name, f.timestamp_ms));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, format_manifest(&entries)).map_err(|source| ImageError::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_sum(f: &Frame, r: Rect) -> u64 {
        let mut s = 0u64;
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                s += f.get(x, y) as u64;
            }
        }
        s
    }

    #[test]
    fn load_small_graymap() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 64, 128, 255]);
        let f = load_pgm(&bytes).unwrap();
        assert_eq!((f.width(), f.height()), (2, 2));
        assert_eq!(f.pixels(), &[0, 64, 128, 255]);
        assert_eq!(f.timestamp_ms, 0);
        assert_eq!(save_pgm(&f), bytes);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n1 # w\n1\n255\n".to_vec();
        bytes.push(9);
        assert_eq!(load_pgm(&bytes).unwrap().pixels(), &[9]);
    }

    #[test]
    fn sixteen_bit_rejected() {
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend([0, 0]);
        let err = load_pgm(&bytes).unwrap_err();
        assert!(matches!(err, ImageError::UnsupportedMaxval(65535)));
        assert!(err.to_string().contains("unsupported maxval"));
    }

    #[test]
    fn malformed_headers_name_the_field() {
        let cases: [(&[u8], &str); 4] = [
            (b"P2\n1 1\n255\n\x00", "magic"),
            (b"P5\nx 1\n255\n\x00", "width"),
            (b"P5\n1 1\n", "maxval"),
            (b"P5\n4 4\n255\n\x00\x00", "payload"),
        ];
        for (bytes, field) in cases {
            match load_pgm(bytes) {
                Err(ImageError::Format { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn full_hd_zero_frame() {
        let mut bytes = b"P5\n1920 1080\n255\n".to_vec();
        bytes.resize(bytes.len() + 1920 * 1080, 0);
        let f = load_pgm(&bytes).unwrap();
        assert_eq!(f.pixels().len(), 2_073_600);
        assert!(f.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn save_one_pixel() {
        let f = Frame::new(1, 1, vec![7]).unwrap();
        assert_eq!(save_pgm(&f), b"P5\n1 1\n255\n\x07".to_vec());
    }

    #[test]
    fn frame_rejects_wrong_pixel_count() {
        assert!(matches!(
            Frame::new(2, 2, vec![0; 3]),
            Err(ImageError::PixelCount { expected: 4, got: 3 })
        ));
        assert!(Frame::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn integral_small_cases() {
        let f = Frame::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let ii = integral(&f);
        assert_eq!(ii.at(2, 2), 10);
        assert_eq!(ii.rect_sum(Rect::new(0, 0, 2, 2)).unwrap(), 10);
        assert_eq!(ii.rect_sum(Rect::new(1, 1, 1, 1)).unwrap(), 4);
        assert!(ii.rect_sum(Rect::new(0, 0, 0, 1)).is_err());
        assert!(ii.rect_sum(Rect::new(1, 0, 2, 1)).is_err());

        let z = integral(&Frame::filled(5, 3, 0).unwrap());
        assert_eq!(z.sums.iter().copied().max(), Some(0));
        assert_eq!(integral(&Frame::new(1, 1, vec![255]).unwrap()).at(1, 1), 255);
    }

    #[test]
    fn draw_rect_outline() {
        let mut f = Frame::filled(5, 5, 0).unwrap();
        f.draw_rect(Rect::new(1, 1, 3, 3), 255);
        assert_eq!(f.get(2, 2), 0);
        assert_eq!(f.get(1, 1), 255);
        assert_eq!(f.get(3, 3), 255);
        assert_eq!(f.get(0, 0), 0);
    }

    #[test]
    fn synth_ground_truth() {
        let cfg = SynthConfig {
            frame_w: 64,
            frame_h: 32,
            patch: Rect::new(0, 0, 8, 8),
            velocity: (10, 0),
            n_frames: 4,
            frame_interval_ms: 33.0,
            seed: 1,
            background: 96,
        };
        assert!((cfg.ground_truth_px_s() - 303.0303).abs() < 1e-3);
        let frames = synth_sequence(&cfg).unwrap();
        assert_eq!(frames.len(), 4);
        assert_eq!(frames[3].timestamp_ms, 99);
        // patch is translated rigidly
        assert_eq!(frames[0].crop(Rect::new(0, 0, 8, 8)).unwrap().pixels(),
                   frames[2].crop(Rect::new(20, 0, 8, 8)).unwrap().pixels());

        let still = SynthConfig { velocity: (0, 0), ..cfg.clone() };
        assert_eq!(still.ground_truth_px_s(), 0.0);
        let still_frames = synth_sequence(&still).unwrap();
        assert_eq!(still_frames[0].pixels(), still_frames[3].pixels());

        let thirty = SynthConfig { frame_interval_ms: 1000.0 / 30.0, ..cfg.clone() };
        assert!((thirty.ground_truth_px_s() - 300.0).abs() < 1e-9);
        assert_eq!(thirty.timestamp_at(1), 33);
        assert_eq!(thirty.timestamp_at(2), 67);

        let escaping = SynthConfig { n_frames: 10, ..cfg };
        assert!(matches!(synth_sequence(&escaping), Err(ImageError::Config(_))));
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let entries = vec![("a.pgm".to_string(), 0), ("b.pgm".to_string(), 33)];
        assert_eq!(parse_manifest(&format_manifest(&entries)).unwrap(), entries);
        assert!(matches!(parse_manifest("a.pgm 12\n"), Err(ImageError::Manifest { line: 1, .. })));
    }

    #[test]
    fn sequence_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<Frame> = (0..3)
            .map(|k| Frame::filled(4, 4, k as u8).unwrap().with_timestamp(k * 40))
            .collect();
        write_sequence(dir.path(), &frames).unwrap();
        assert_eq!(load_sequence(dir.path(), None).unwrap(), frames);

        fs::remove_file(dir.path().join(MANIFEST)).unwrap();
        assert!(load_sequence(dir.path(), None).is_err());
        let uniform = load_sequence(dir.path(), Some(25.0)).unwrap();
        let ts: Vec<u64> = uniform.iter().map(|f| f.timestamp_ms).collect();
        assert_eq!(ts, vec![0, 40, 80]);
    }

    #[test]
    fn manifest_with_non_increasing_time_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = Frame::filled(2, 2, 0).unwrap();
        write_pgm_file(&dir.path().join("a.pgm"), &f).unwrap();
        write_pgm_file(&dir.path().join("b.pgm"), &f).unwrap();
        fs::write(dir.path().join(MANIFEST), "a.pgm\t10\nb.pgm\t10\n").unwrap();
        assert!(matches!(load_sequence(dir.path(), None), Err(ImageError::TimeOrder { .. })));
    }

    fn frame_strategy(max: u32) -> impl Strategy<Value = Frame> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h) as usize)
                .prop_map(move |px| Frame::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pgm_round_trip(f in frame_strategy(48)) {
            prop_assert_eq!(load_pgm(&save_pgm(&f)).unwrap(), f);
        }

        #[test]
        fn integral_table_invariants(f in frame_strategy(24)) {
            let ii = integral(&f);
            for c in 0..=f.width() { prop_assert_eq!(ii.at(0, c), 0); }
            for r in 0..=f.height() { prop_assert_eq!(ii.at(r, 0), 0); }
            for r in 1..=f.height() {
                for c in 1..=f.width() {
                    prop_assert!(ii.at(r, c) >= ii.at(r - 1, c));
                    prop_assert!(ii.at(r, c) >= ii.at(r, c - 1));
                }
            }
            prop_assert_eq!(ii.total(), f.pixels().iter().map(|&p| p as u64).sum::<u64>());
        }

        #[test]
        fn rect_sum_matches_naive(
            f in frame_strategy(32),
            a in any::<(u32, u32, u32, u32)>(),
        ) {
            let x = a.0 % f.width();
            let y = a.1 % f.height();
            let w = 1 + a.2 % (f.width() - x);
            let h = 1 + a.3 % (f.height() - y);
            let r = Rect::new(x, y, w, h);
            prop_assert_eq!(integral(&f).rect_sum(r).unwrap(), naive_sum(&f, r));
        }
    }
}
