//! Multi-scale sliding-window scanning, rectangle grouping and selection of
//! the tracked vehicle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{integral, Frame, IntegralImage, Rect};
use crate::mblbp::CascadeModel;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("no scan scales: minimum window {min_w}x{min_h} does not fit {frame_w}x{frame_h} frame or is below the model window")]
    NoScale {
        min_w: f64,
        min_h: f64,
        frame_w: u32,
        frame_h: u32,
    },
    #[error("invalid detector parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "snake_case")]
pub struct DetectorParams {
    /// Smallest searched window height as a fraction of the frame height.
    pub min_size_fraction: f64,
    pub scale_factor: f64,
    pub stride_base: u32,
    pub min_neighbors: usize,
    pub group_eps: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            min_size_fraction: 0.3,
            scale_factor: 1.1,
            stride_base: 2,
            min_neighbors: 3,
            group_eps: 0.2,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: &str| Err(DetectError::Param(m.to_string()));
        if !(self.min_size_fraction > 0.0 && self.min_size_fraction <= 1.0) {
            return bad("min_size_fraction must lie in (0, 1]");
        }
        if !(self.scale_factor > 1.0 && self.scale_factor.is_finite()) {
            return bad("scale_factor must be greater than 1");
        }
        if self.stride_base < 1 {
            return bad("stride_base must be at least 1");
        }
        if self.min_neighbors < 1 {
            return bad("min_neighbors must be at least 1");
        }
        if !(self.group_eps >= 0.0 && self.group_eps.is_finite()) {
            return bad("group_eps must be non-negative");
        }
        Ok(())
    }

    /// Scan step at `scale`.
    pub fn stride(&self, scale: f64) -> u32 {
        self.stride_base.max(scale.round() as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rect: Rect,
    pub scale: f64,
    /// Number of raw candidates fused into this detection.
    pub neighbors: usize,
}

/// Raw candidate produced by the scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub rect: Rect,
    pub scale: f64,
}

/// Ascending scales starting at the minimum window, growing by
/// `scale_factor` until the window no longer fits the frame.
pub fn scale_schedule(
    frame: (u32, u32),
    window: (u32, u32),
    params: &DetectorParams,
) -> Result<Vec<f64>, DetectError> {
    params.validate()?;
    let (fw, fh) = (frame.0 as f64, frame.1 as f64);
    let (ww, wh) = (window.0 as f64, window.1 as f64);
    let s0 = params.min_size_fraction * fh / wh;
    let fits = |s: f64| (ww * s).round() <= fw && (wh * s).round() <= fh;
    let no_scale = || DetectError::NoScale {
        min_w: ww * s0,
        min_h: wh * s0,
        frame_w: frame.0,
        frame_h: frame.1,
    };
    // the minimum window may not be smaller than the model window
    if s0 < 1.0 - 1e-9 || !fits(s0) {
        return Err(no_scale());
    }
    let mut scales = vec![s0];
    let mut s = s0 * params.scale_factor;
    while fits(s) {
        scales.push(s);
        s *= params.scale_factor;
    }
    Ok(scales)
}

/// Slides the cascade over every scale. Output order is scale-major, then
/// row-major within a scale.
pub fn scan(frame: &Frame, model: &CascadeModel, params: &DetectorParams) -> Result<Vec<Candidate>, DetectError> {
    let ii = integral(frame);
    scan_integral(&ii, model, params)
}

pub fn scan_integral(
    ii: &IntegralImage,
    model: &CascadeModel,
    params: &DetectorParams,
) -> Result<Vec<Candidate>, DetectError> {
    let scales = scale_schedule((ii.width(), ii.height()), (model.window_w, model.window_h), params)?;
    let per_scale: Vec<Vec<Candidate>> = scales
        .par_iter()
        .map(|&scale| {
            let sc = model.at_scale(scale);
            let (ew, eh) = sc.extent();
            if ew > ii.width() || eh > ii.height() {
                return Vec::new();
            }
            let (ww, wh) = sc.window();
            let step = params.stride(scale) as usize;
            let xs: Vec<u32> = (0..=ii.width() - ew).step_by(step).collect();
            (0..=ii.height() - eh)
                .step_by(step)
                .flat_map(|y| {
                    let sc = &sc;
                    xs.iter().filter_map(move |&x| {
                        sc.eval_unchecked(ii, x, y).verdict.is_accepted().then_some(Candidate {
                            rect: Rect::new(x, y, ww, wh),
                            scale,
                        })
                    })
                })
                .collect()
        })
        .collect();
    Ok(per_scale.into_iter().flatten().collect())
}

fn similar(a: &Rect, b: &Rect, eps: f64) -> bool {
    let mean_w = (a.w as f64 + b.w as f64) / 2.0;
    let mean_h = (a.h as f64 + b.h as f64) / 2.0;
    let delta = eps * (mean_w + mean_h) / 2.0;
    let close = |p: u32, q: u32| (p as f64 - q as f64).abs() <= delta;
    close(a.x, b.x) && close(a.y, b.y) && close(a.right(), b.right()) && close(a.bottom(), b.bottom())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Canonical detection order: descending area, then ascending `(y, x)`.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.rect
            .area()
            .cmp(&a.rect.area())
            .then(a.rect.y.cmp(&b.rect.y))
            .then(a.rect.x.cmp(&b.rect.x))
            .then(a.rect.w.cmp(&b.rect.w))
            .then(b.neighbors.cmp(&a.neighbors))
    });
}

/// Fuses candidates into detections. Similarity classes are the transitive
/// closure of edge proximity; classes with at least `min_neighbors` members
/// yield their mean rectangle.
pub fn group_rects(cands: &[Candidate], params: &DetectorParams) -> Vec<Detection> {
    let n = cands.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if similar(&cands[i].rect, &cands[j].rect, params.group_eps) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        classes[r].push(i);
    }
    let mut dets: Vec<Detection> = classes
        .into_iter()
        .filter(|c| !c.is_empty() && c.len() >= params.min_neighbors)
        .map(|members| {
            let k = members.len() as f64;
            let mean = |f: fn(&Candidate) -> f64| members.iter().map(|&i| f(&cands[i])).sum::<f64>() / k;
            let x = mean(|c| c.rect.x as f64).round() as u32;
            let y = mean(|c| c.rect.y as f64).round() as u32;
            let r = mean(|c| c.rect.right() as f64).round() as u32;
            let b = mean(|c| c.rect.bottom() as f64).round() as u32;
            Detection {
                rect: Rect::new(x, y, (r - x).max(1), (b - y).max(1)),
                scale: mean(|c| c.scale),
                neighbors: members.len(),
            }
        })
        .collect();
    sort_detections(&mut dets);
    dets
}

pub fn detect(frame: &Frame, model: &CascadeModel, params: &DetectorParams) -> Result<Vec<Detection>, DetectError> {
    Ok(group_rects(&scan(frame, model, params)?, params))
}

/// The tracked vehicle: the largest detection in canonical order.
pub fn select_vehicle(dets: &[Detection]) -> Option<Detection> {
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    sorted.first().copied()
}

/// One `frame_index x y w h neighbors` line per detection.
pub fn format_detections_tsv(frame_index: usize, dets: &[Detection]) -> String {
    dets.iter()
        .map(|d| {
            format!(
                "{frame_index}\t{}\t{}\t{}\t{}\t{}\n",
                d.rect.x, d.rect.y, d.rect.w, d.rect.h, d.neighbors
            )
        })
        .collect()
}
