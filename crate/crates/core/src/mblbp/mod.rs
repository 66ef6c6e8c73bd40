//! Multi-block LBP features and boosted cascade evaluation.
//!
//! A feature is a 3x3 grid of equally sized blocks. Its 8-bit code compares
//! each neighbor block sum against the center block sum (`>=` sets the bit),
//! walking clockwise from the top-left block:
//!
//! ```text
//!   bit7  bit6  bit5
//!   bit0   c    bit4
//!   bit1  bit2  bit3
//! ```
//!
//! Trainer, serializer and evaluator all share this order.

mod xml;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::IntegralImage;

pub use xml::{import_cascade_xml, import_cascade_xml_with, CodeOrder};

pub const DEFAULT_WINDOW_W: u32 = 48;
pub const DEFAULT_WINDOW_H: u32 = 24;

#[derive(Debug, Error)]
pub enum MbLbpError {
    #[error("feature grid at ({x},{y}) spanning {w}x{h} exceeds {width}x{height} image")]
    OutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("model parse error at line {line}, column {col}: {msg}")]
    Xml { line: u32, col: u32, msg: String },
    #[error("stage {stage} weak {weak} references feature {index}, but only {count} features exist")]
    Reference {
        stage: usize,
        weak: usize,
        index: usize,
        count: usize,
    },
    #[error("unsupported model: {0}")]
    Unsupported(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// 3x3 block grid anchored at `(bx, by)` inside the detection window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MbLbpFeature {
    pub bx: u32,
    pub by: u32,
    pub bw: u32,
    pub bh: u32,
}

impl MbLbpFeature {
    pub const fn new(bx: u32, by: u32, bw: u32, bh: u32) -> Self {
        MbLbpFeature { bx, by, bw, bh }
    }

    pub fn fits_window(&self, window_w: u32, window_h: u32) -> bool {
        self.bw > 0 && self.bh > 0 && self.bx + 3 * self.bw <= window_w && self.by + 3 * self.bh <= window_h
    }

    /// Block geometry at `scale`: offsets and block sizes rounded to the
    /// nearest pixel, block sizes at least one pixel.
    pub fn scaled(&self, scale: f64) -> ScaledFeature {
        let r = |v: u32| (v as f64 * scale).round() as u32;
        ScaledFeature {
            dx: r(self.bx),
            dy: r(self.by),
            bw: r(self.bw).max(1),
            bh: r(self.bh).max(1),
        }
    }
}

/// A feature resolved to pixel geometry for one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaledFeature {
    pub dx: u32,
    pub dy: u32,
    pub bw: u32,
    pub bh: u32,
}

impl ScaledFeature {
    /// Right and bottom edges of the grid relative to the window origin.
    pub fn extent(&self) -> (u32, u32) {
        (self.dx + 3 * self.bw, self.dy + 3 * self.bh)
    }

    /// LBP code of the grid with window origin `(x, y)`. The grid must lie
    /// inside `ii`.
    #[inline]
    pub fn code(&self, ii: &IntegralImage, x: u32, y: u32) -> u8 {
        let (x0, y0) = (x + self.dx, y + self.dy);
        let (w, h) = (self.bw, self.bh);
        let xs = [x0, x0 + w, x0 + 2 * w, x0 + 3 * w];
        let ys = [y0, y0 + h, y0 + 2 * h, y0 + 3 * h];
        // 4x4 corner samples give all nine block sums
        let mut p = [[0u64; 4]; 4];
        for (r, &yy) in ys.iter().enumerate() {
            for (c, &xx) in xs.iter().enumerate() {
                p[r][c] = ii.at(yy, xx);
            }
        }
        let block = |r: usize, c: usize| p[r + 1][c + 1] + p[r][c] - p[r][c + 1] - p[r + 1][c];
        let center = block(1, 1);
        let neighbors = [
            block(0, 0), // TL
            block(0, 1), // T
            block(0, 2), // TR
            block(1, 2), // R
            block(2, 2), // BR
            block(2, 1), // B
            block(2, 0), // BL
            block(1, 0), // L
        ];
        neighbors
            .iter()
            .fold(0u8, |code, &n| (code << 1) | (n >= center) as u8)
    }
}

/// Canonical LBP code of feature `f` for the window at `origin` and `scale`.
pub fn lbp_code(ii: &IntegralImage, f: &MbLbpFeature, origin: (u32, u32), scale: f64) -> Result<u8, MbLbpError> {
    let sf = f.scaled(scale);
    let (ew, eh) = sf.extent();
    let (x, y) = origin;
    if x as u64 + ew as u64 > ii.width() as u64 || y as u64 + eh as u64 > ii.height() as u64 {
        return Err(MbLbpError::OutOfBounds {
            x,
            y,
            w: ew,
            h: eh,
            width: ii.width(),
            height: ii.height(),
        });
    }
    Ok(sf.code(ii, x, y))
}

/// 256-bit category set over LBP codes. Bit `c` lives in word `c >> 5` at
/// position `c & 31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CodeSubset(pub [u32; 8]);

impl CodeSubset {
    pub const EMPTY: CodeSubset = CodeSubset([0; 8]);
    pub const FULL: CodeSubset = CodeSubset([u32::MAX; 8]);

    pub fn from_codes(codes: impl IntoIterator<Item = u8>) -> Self {
        let mut s = CodeSubset::EMPTY;
        for c in codes {
            s.insert(c);
        }
        s
    }

    #[inline]
    pub fn contains(&self, code: u8) -> bool {
        self.0[(code >> 5) as usize] & (1 << (code & 31)) != 0
    }

    pub fn insert(&mut self, code: u8) {
        self.0[(code >> 5) as usize] |= 1 << (code & 31);
    }

    pub fn len(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }
}

/// Decision stump on subset membership of one feature's code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakClassifier {
    pub feature_index: usize,
    pub subset: CodeSubset,
    /// Vote when the code is in the subset.
    pub leaf_in: f64,
    /// Vote when the code is not in the subset.
    pub leaf_out: f64,
}

impl WeakClassifier {
    #[inline]
    pub fn vote(&self, code: u8) -> f64 {
        if self.subset.contains(code) {
            self.leaf_in
        } else {
            self.leaf_out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub threshold: f64,
    pub weaks: Vec<WeakClassifier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub window_w: u32,
    pub window_h: u32,
    pub features: Vec<MbLbpFeature>,
    pub stages: Vec<Stage>,
}

impl CascadeModel {
    /// Builds a model after checking every structural invariant.
    pub fn new(window_w: u32, window_h: u32, features: Vec<MbLbpFeature>, stages: Vec<Stage>) -> Result<Self, MbLbpError> {
        let m = CascadeModel {
            window_w,
            window_h,
            features,
            stages,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MbLbpError> {
        if self.window_w < 3 || self.window_h < 3 {
            return Err(MbLbpError::Invalid(format!(
                "window {}x{} is smaller than 3x3",
                self.window_w, self.window_h
            )));
        }
        if self.stages.is_empty() {
            return Err(MbLbpError::Invalid("model has no stages".into()));
        }
        for (i, f) in self.features.iter().enumerate() {
            if !f.fits_window(self.window_w, self.window_h) {
                return Err(MbLbpError::Invalid(format!(
                    "feature {i} {:?} does not fit the {}x{} window",
                    f, self.window_w, self.window_h
                )));
            }
        }
        for (si, stage) in self.stages.iter().enumerate() {
            if stage.weaks.is_empty() {
                return Err(MbLbpError::Invalid(format!("stage {si} has no weak classifiers")));
            }
            if !stage.threshold.is_finite() {
                return Err(MbLbpError::Invalid(format!("stage {si} threshold is not finite")));
            }
            for (wi, w) in stage.weaks.iter().enumerate() {
                if w.feature_index >= self.features.len() {
                    return Err(MbLbpError::Reference {
                        stage: si,
                        weak: wi,
                        index: w.feature_index,
                        count: self.features.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Prepares the model for evaluation at one scale.
    pub fn at_scale(&self, scale: f64) -> ScaledCascade<'_> {
        ScaledCascade::new(self, scale)
    }

    /// Parses the canonical JSON model document.
    pub fn from_json(text: &str) -> Result<Self, MbLbpError> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| MbLbpError::Parse(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDoc::from(self)).expect("model document serializes")
    }
}

pub fn save_model(model: &CascadeModel) -> String {
    model.to_json()
}

pub fn load_model(text: &str) -> Result<CascadeModel, MbLbpError> {
    CascadeModel::from_json(text)
}

/// Outcome of evaluating one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected { stage: usize },
}

impl Verdict {
    pub fn is_accepted(self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowTrace {
    pub verdict: Verdict,
    pub weaks_evaluated: usize,
}

/// A model with its features resolved for one scale.
#[derive(Debug, Clone)]
pub struct ScaledCascade<'m> {
    model: &'m CascadeModel,
    scale: f64,
    features: Vec<ScaledFeature>,
    window: (u32, u32),
    extent: (u32, u32),
}

impl<'m> ScaledCascade<'m> {
    pub fn new(model: &'m CascadeModel, scale: f64) -> Self {
        let features: Vec<ScaledFeature> = model.features.iter().map(|f| f.scaled(scale)).collect();
        let window = (
            ((model.window_w as f64 * scale).round() as u32).max(1),
            ((model.window_h as f64 * scale).round() as u32).max(1),
        );
        let extent = features.iter().fold(window, |(w, h), f| {
            let (fw, fh) = f.extent();
            (w.max(fw), h.max(fh))
        });
        ScaledCascade {
            model,
            scale,
            features,
            window,
            extent,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Scaled detection window size.
    pub fn window(&self) -> (u32, u32) {
        self.window
    }

    /// Footprint of the window and every scaled feature grid. Origins must
    /// leave this much room inside the image.
    pub fn extent(&self) -> (u32, u32) {
        self.extent
    }

    pub fn fits(&self, ii: &IntegralImage, x: u32, y: u32) -> bool {
        x as u64 + self.extent.0 as u64 <= ii.width() as u64 && y as u64 + self.extent.1 as u64 <= ii.height() as u64
    }

    fn check(&self, ii: &IntegralImage, x: u32, y: u32) -> Result<(), MbLbpError> {
        if self.fits(ii, x, y) {
            Ok(())
        } else {
            Err(MbLbpError::OutOfBounds {
                x,
                y,
                w: self.extent.0,
                h: self.extent.1,
                width: ii.width(),
                height: ii.height(),
            })
        }
    }

    #[inline]
    fn weak_vote(&self, ii: &IntegralImage, w: &WeakClassifier, x: u32, y: u32) -> f64 {
        w.vote(self.features[w.feature_index].code(ii, x, y))
    }

    /// Sum of weak votes for `stage` at origin `(x, y)`; no bounds check.
    #[inline]
    pub fn stage_sum_unchecked(&self, ii: &IntegralImage, stage: &Stage, x: u32, y: u32) -> f64 {
        stage.weaks.iter().map(|w| self.weak_vote(ii, w, x, y)).sum()
    }

    /// Early-exit cascade evaluation; no bounds check.
    #[inline]
    pub fn eval_unchecked(&self, ii: &IntegralImage, x: u32, y: u32) -> WindowTrace {
        let mut weaks_evaluated = 0;
        for (i, stage) in self.model.stages.iter().enumerate() {
            weaks_evaluated += stage.weaks.len();
            if self.stage_sum_unchecked(ii, stage, x, y) < stage.threshold {
                return WindowTrace {
                    verdict: Verdict::Rejected { stage: i },
                    weaks_evaluated,
                };
            }
        }
        WindowTrace {
            verdict: Verdict::Accepted,
            weaks_evaluated,
        }
    }

    pub fn eval(&self, ii: &IntegralImage, x: u32, y: u32) -> Result<WindowTrace, MbLbpError> {
        self.check(ii, x, y)?;
        Ok(self.eval_unchecked(ii, x, y))
    }

    pub fn stage_sum(&self, ii: &IntegralImage, stage: usize, x: u32, y: u32) -> Result<f64, MbLbpError> {
        self.check(ii, x, y)?;
        Ok(self.stage_sum_unchecked(ii, &self.model.stages[stage], x, y))
    }
}

/// Vote of one weak classifier of `model` for the window at `origin`.
pub fn eval_weak(
    ii: &IntegralImage,
    w: &WeakClassifier,
    model: &CascadeModel,
    origin: (u32, u32),
    scale: f64,
) -> Result<f64, MbLbpError> {
    let f = model.features.get(w.feature_index).ok_or(MbLbpError::Reference {
        stage: 0,
        weak: 0,
        index: w.feature_index,
        count: model.features.len(),
    })?;
    Ok(w.vote(lbp_code(ii, f, origin, scale)?))
}

/// Runs the cascade with early exit and reports where it stopped.
pub fn eval_window_trace(
    ii: &IntegralImage,
    model: &CascadeModel,
    origin: (u32, u32),
    scale: f64,
) -> Result<WindowTrace, MbLbpError> {
    model.at_scale(scale).eval(ii, origin.0, origin.1)
}

pub fn eval_window(ii: &IntegralImage, model: &CascadeModel, origin: (u32, u32), scale: f64) -> Result<bool, MbLbpError> {
    Ok(eval_window_trace(ii, model, origin, scale)?.verdict.is_accepted())
}

/// Builds an exact-appearance detector: one single-weak stage per feature,
/// each accepting only the code that feature produces on `ii` at `origin`
/// and `scale`. Useful for synthetic tracking where the target's texture
/// is known.
pub fn template_cascade(
    ii: &IntegralImage,
    origin: (u32, u32),
    scale: f64,
    window: (u32, u32),
    features: Vec<MbLbpFeature>,
) -> Result<CascadeModel, MbLbpError> {
    if features.is_empty() {
        return Err(MbLbpError::Invalid("template needs at least one feature".into()));
    }
    let stages = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(Stage {
                threshold: 0.0,
                weaks: vec![WeakClassifier {
                    feature_index: i,
                    subset: CodeSubset::from_codes([lbp_code(ii, f, origin, scale)?]),
                    leaf_in: 1.0,
                    leaf_out: -1.0,
                }],
            })
        })
        .collect::<Result<Vec<_>, MbLbpError>>()?;
    CascadeModel::new(window.0, window.1, features, stages)
}

/// Features of `block_w`x`block_h` blocks tiling the window without overlap.
pub fn tiled_features(window_w: u32, window_h: u32, block_w: u32, block_h: u32) -> Vec<MbLbpFeature> {
    let (gw, gh) = (3 * block_w.max(1), 3 * block_h.max(1));
    let mut out = Vec::new();
    let mut by = 0;
    while by + gh <= window_h {
        let mut bx = 0;
        while bx + gw <= window_w {
            out.push(MbLbpFeature::new(bx, by, block_w, block_h));
            bx += gw;
        }
        by += gh;
    }
    out
}

// Canonical JSON document.

fn default_window() -> [u32; 2] {
    [DEFAULT_WINDOW_W, DEFAULT_WINDOW_H]
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(default = "default_window")]
    window: [u32; 2],
    features: Vec<[u32; 4]>,
    stages: Vec<StageDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageDoc {
    threshold: f64,
    weaks: Vec<WeakDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct WeakDoc {
    feature: usize,
    subset: [u32; 8],
    leaf_in: f64,
    leaf_out: f64,
}

impl From<&CascadeModel> for ModelDoc {
    fn from(m: &CascadeModel) -> Self {
        ModelDoc {
            window: [m.window_w, m.window_h],
            features: m.features.iter().map(|f| [f.bx, f.by, f.bw, f.bh]).collect(),
            stages: m
                .stages
                .iter()
                .map(|s| StageDoc {
                    threshold: s.threshold,
                    weaks: s
                        .weaks
                        .iter()
                        .map(|w| WeakDoc {
                            feature: w.feature_index,
                            subset: w.subset.0,
                            leaf_in: w.leaf_in,
                            leaf_out: w.leaf_out,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelDoc> for CascadeModel {
    type Error = MbLbpError;

    fn try_from(doc: ModelDoc) -> Result<Self, MbLbpError> {
        let features = doc
            .features
            .into_iter()
            .map(|[bx, by, bw, bh]| MbLbpFeature { bx, by, bw, bh })
            .collect();
        let stages = doc
            .stages
            .into_iter()
            .map(|s| Stage {
                threshold: s.threshold,
                weaks: s
                    .weaks
                    .into_iter()
                    .map(|w| WeakClassifier {
                        feature_index: w.feature,
                        subset: CodeSubset(w.subset),
                        leaf_in: w.leaf_in,
                        leaf_out: w.leaf_out,
                    })
                    .collect(),
            })
            .collect();
        CascadeModel::new(doc.window[0], doc.window[1], features, stages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{integral, Frame};
    use proptest::prelude::*;

    /// Independent code computation straight from pixels.
    fn naive_code(f: &Frame, feat: &MbLbpFeature, origin: (u32, u32), scale: f64) -> u8 {
        let r = |v: u32| (v as f64 * scale).round() as u32;
        let (bw, bh) = (r(feat.bw).max(1), r(feat.bh).max(1));
        let (x0, y0) = (origin.0 + r(feat.bx), origin.1 + r(feat.by));
        let block = |col: u32, row: u32| -> u64 {
            let mut s = 0u64;
            for y in y0 + row * bh..y0 + (row + 1) * bh {
                for x in x0 + col * bw..x0 + (col + 1) * bw {
                    s += f.get(x, y) as u64;
                }
            }
            s
        };
        let c = block(1, 1);
        let order = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
        let mut code = 0u8;
        for (k, &(col, row)) in order.iter().enumerate() {
            if block(col, row) >= c {
                code |= 1 << (7 - k);
            }
        }
        code
    }

    fn one_stage(weaks: Vec<WeakClassifier>, threshold: f64) -> Stage {
        Stage { threshold, weaks }
    }

    fn const_weak(vote: f64) -> WeakClassifier {
        WeakClassifier {
            feature_index: 0,
            subset: CodeSubset::FULL,
            leaf_in: vote,
            leaf_out: vote,
        }
    }

    #[test]
    fn alternating_neighbors_code() {
        // neighbors in canonical order TL,T,TR,R,BR,B,BL,L = 9,1,9,1,9,1,9,1
        let f = Frame::new(3, 3, vec![9, 1, 9, 1, 5, 1, 9, 1, 9]).unwrap();
        let ii = integral(&f);
        let feat = MbLbpFeature::new(0, 0, 1, 1);
        assert_eq!(naive_code(&f, &feat, (0, 0), 1.0), 0b1010_1010);
        assert_eq!(lbp_code(&ii, &feat, (0, 0), 1.0).unwrap(), 170);
    }

    #[test]
    fn uniform_and_bright_center_codes() {
        let feat = MbLbpFeature::new(0, 0, 1, 1);
        let uniform = integral(&Frame::filled(3, 3, 77).unwrap());
        assert_eq!(lbp_code(&uniform, &feat, (0, 0), 1.0).unwrap(), 255);
        let mut px = vec![0u8; 9];
        px[4] = 255;
        let bright = integral(&Frame::new(3, 3, px).unwrap());
        assert_eq!(lbp_code(&bright, &feat, (0, 0), 1.0).unwrap(), 0);
    }

    #[test]
    fn code_out_of_bounds() {
        let ii = integral(&Frame::filled(3, 3, 0).unwrap());
        let feat = MbLbpFeature::new(0, 0, 1, 1);
        assert!(matches!(lbp_code(&ii, &feat, (1, 0), 1.0), Err(MbLbpError::OutOfBounds { .. })));
        assert!(lbp_code(&ii, &feat, (0, 0), 2.0).is_err());
    }

    #[test]
    fn weak_votes_follow_subset() {
        let f = Frame::new(3, 3, vec![9, 1, 9, 1, 5, 1, 9, 1, 9]).unwrap();
        let ii = integral(&f);
        let mut model = CascadeModel::new(
            3,
            3,
            vec![MbLbpFeature::new(0, 0, 1, 1)],
            vec![one_stage(vec![const_weak(1.0)], 0.0)],
        )
        .unwrap();
        let mut w = WeakClassifier {
            feature_index: 0,
            subset: CodeSubset::from_codes([170]),
            leaf_in: 1.0,
            leaf_out: -1.0,
        };
        assert_eq!(eval_weak(&ii, &w, &model, (0, 0), 1.0).unwrap(), 1.0);
        w.subset = CodeSubset::EMPTY;
        assert_eq!(eval_weak(&ii, &w, &model, (0, 0), 1.0).unwrap(), -1.0);
        w.subset = CodeSubset::FULL;
        assert_eq!(eval_weak(&ii, &w, &model, (0, 0), 1.0).unwrap(), 1.0);
        model.features.clear();
        assert!(eval_weak(&ii, &w, &model, (0, 0), 1.0).is_err());
    }

    #[test]
    fn subset_bit_layout() {
        let s = CodeSubset::from_codes([0, 31, 32, 255]);
        assert_eq!(s.0[0], 1 | (1 << 31));
        assert_eq!(s.0[1], 1);
        assert_eq!(s.0[7], 1 << 31);
        assert_eq!(s.len(), 4);
        assert!(CodeSubset::EMPTY.is_empty());
        assert_eq!(CodeSubset::FULL.len(), 256);
    }

    #[test]
    fn single_stage_accept_and_reject() {
        let ii = integral(&Frame::filled(3, 3, 10).unwrap());
        let feats = vec![MbLbpFeature::new(0, 0, 1, 1)];
        let reject = CascadeModel::new(3, 3, feats.clone(), vec![one_stage(vec![const_weak(-1.0)], 0.0)]).unwrap();
        let accept = CascadeModel::new(3, 3, feats, vec![one_stage(vec![const_weak(1.0)], 0.0)]).unwrap();
        assert_eq!(
            eval_window_trace(&ii, &reject, (0, 0), 1.0).unwrap().verdict,
            Verdict::Rejected { stage: 0 }
        );
        assert!(eval_window(&ii, &accept, (0, 0), 1.0).unwrap());
    }

    #[test]
    fn early_exit_skips_later_stages() {
        let ii = integral(&Frame::filled(3, 3, 10).unwrap());
        let model = CascadeModel::new(
            3,
            3,
            vec![MbLbpFeature::new(0, 0, 1, 1)],
            vec![
                one_stage(vec![const_weak(-1.0)], 0.0),
                one_stage(vec![const_weak(1.0), const_weak(1.0), const_weak(1.0)], 0.0),
            ],
        )
        .unwrap();
        let t = eval_window_trace(&ii, &model, (0, 0), 1.0).unwrap();
        assert_eq!(t.verdict, Verdict::Rejected { stage: 0 });
        assert_eq!(t.weaks_evaluated, 1);
    }

    #[test]
    fn window_bounds_checked() {
        let ii = integral(&Frame::filled(4, 4, 0).unwrap());
        let model = CascadeModel::new(3, 3, vec![MbLbpFeature::new(0, 0, 1, 1)], vec![one_stage(vec![const_weak(1.0)], 0.0)]).unwrap();
        assert!(eval_window(&ii, &model, (1, 1), 1.0).is_ok());
        assert!(eval_window(&ii, &model, (2, 0), 1.0).is_err());
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let model = CascadeModel::new(
            48,
            24,
            vec![MbLbpFeature::new(3, 2, 5, 4)],
            vec![one_stage(
                vec![WeakClassifier {
                    feature_index: 0,
                    subset: CodeSubset([1, 2, 3, u32::MAX, 0, 7, 8, 0x8000_0000]),
                    leaf_in: 0.549_306_144_334_054_9,
                    leaf_out: -0.1,
                }],
                -0.25,
            )],
        )
        .unwrap();
        let text = save_model(&model);
        assert!(text.contains("4294967295"));
        assert!(text.contains("\"leafIn\""));
        assert_eq!(load_model(&text).unwrap(), model);

        let no_window = r#"{"features":[[0,0,1,1]],"stages":[{"threshold":0,"weaks":[{"feature":0,"subset":[0,0,0,0,0,0,0,0],"leafIn":1,"leafOut":-1}]}]}"#;
        let m = load_model(no_window).unwrap();
        assert_eq!((m.window_w, m.window_h), (48, 24));
    }

    #[test]
    fn json_errors() {
        let missing = r#"{"window":[48,24],"features":[]}"#;
        let err = load_model(missing).unwrap_err().to_string();
        assert!(err.contains("stages"), "{err}");

        let dangling = r#"{"features":[[0,0,1,1]],"stages":[{"threshold":0,"weaks":[{"feature":3,"subset":[0,0,0,0,0,0,0,0],"leafIn":1,"leafOut":-1}]}]}"#;
        assert!(matches!(load_model(dangling), Err(MbLbpError::Reference { index: 3, .. })));

        let too_big = r#"{"window":[6,6],"features":[[0,0,3,1]],"stages":[{"threshold":0,"weaks":[{"feature":0,"subset":[0,0,0,0,0,0,0,0],"leafIn":1,"leafOut":-1}]}]}"#;
        assert!(matches!(load_model(too_big), Err(MbLbpError::Invalid(_))));
    }

    #[test]
    fn tiling_covers_window() {
        let t = tiled_features(48, 24, 2, 2);
        assert_eq!(t.len(), 32);
        assert!(t.iter().all(|f| f.fits_window(48, 24)));
        assert_eq!(tiled_features(48, 24, 16, 8), vec![MbLbpFeature::new(0, 0, 16, 8)]);
    }

    #[test]
    fn template_accepts_its_own_window() {
        let f = Frame::new(6, 6, (0..36).map(|v| (v * 37 % 251) as u8).collect()).unwrap();
        let ii = integral(&f);
        let m = template_cascade(&ii, (1, 2), 1.0, (3, 3), vec![MbLbpFeature::new(0, 0, 1, 1)]).unwrap();
        assert!(eval_window(&ii, &m, (1, 2), 1.0).unwrap());
    }

    fn frame_strategy() -> impl Strategy<Value = Frame> {
        (9u32..=96, 9u32..=48).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h) as usize).prop_map(move |px| Frame::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn code_matches_naive_blocks(
            f in frame_strategy(),
            scale_idx in 0usize..3,
            seed in any::<(u32, u32, u32, u32, u32, u32)>(),
        ) {
            let scale = [1.0, 1.5, 2.0][scale_idx];
            let r = |v: u32| (v as f64 * scale).round() as u32;
            // pick block sizes so the scaled grid fits
            let max_bw = ((f.width() as f64 / scale) / 3.0).floor().max(1.0) as u32;
            let max_bh = ((f.height() as f64 / scale) / 3.0).floor().max(1.0) as u32;
            let bw = 1 + seed.0 % max_bw;
            let bh = 1 + seed.1 % max_bh;
            let bx = seed.2 % 3;
            let by = seed.3 % 3;
            let feat = MbLbpFeature::new(bx, by, bw, bh);
            let ew = r(bx) + 3 * r(bw).max(1);
            let eh = r(by) + 3 * r(bh).max(1);
            prop_assume!(ew <= f.width() && eh <= f.height());
            let ox = seed.4 % (f.width() - ew + 1);
            let oy = seed.5 % (f.height() - eh + 1);
            let ii = integral(&f);
            prop_assert_eq!(lbp_code(&ii, &feat, (ox, oy), scale).unwrap(), naive_code(&f, &feat, (ox, oy), scale));
        }

        #[test]
        fn early_exit_agrees_with_exhaustive(
            px in proptest::collection::vec(any::<u8>(), 81),
            thresholds in proptest::collection::vec(-2.0f64..2.0, 1..4),
            subsets in proptest::collection::vec(any::<[u32; 8]>(), 3),
        ) {
            let f = Frame::new(9, 9, px).unwrap();
            let ii = integral(&f);
            let features = vec![MbLbpFeature::new(0, 0, 3, 3), MbLbpFeature::new(0, 0, 1, 1), MbLbpFeature::new(2, 2, 2, 2)];
            let stages: Vec<Stage> = thresholds.iter().map(|&t| Stage {
                threshold: t,
                weaks: (0..3).map(|i| WeakClassifier {
                    feature_index: i,
                    subset: CodeSubset(subsets[i]),
                    leaf_in: 1.0,
                    leaf_out: -0.5,
                }).collect(),
            }).collect();
            let model = CascadeModel::new(9, 9, features, stages).unwrap();
            let sc = model.at_scale(1.0);
            let exhaustive = (0..model.stages.len())
                .map(|s| sc.stage_sum(&ii, s, 0, 0).unwrap() >= model.stages[s].threshold)
                .fold(true, |acc, pass| acc & pass);
            prop_assert_eq!(eval_window(&ii, &model, (0, 0), 1.0).unwrap(), exhaustive);
        }
    }
}
