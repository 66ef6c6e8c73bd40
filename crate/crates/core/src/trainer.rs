//! Desk-scale discrete AdaBoost training of MB-LBP cascades.
//!
//! Each weak learner is a categorical stump: for a fixed feature, the code
//! subset holding every code whose positive weight mass exceeds its negative
//! mass minimizes weighted 0-1 loss exactly. Stage votes are `+alpha` inside
//! the subset and `-alpha` outside, so trained models run on the ordinary
//! cascade evaluator.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::imaging::{integral, read_pgm_file, Frame, ImageError, IntegralImage};
use crate::mblbp::{lbp_code, CascadeModel, CodeSubset, MbLbpError, MbLbpFeature, Stage, WeakClassifier};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Model(#[from] MbLbpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub window: Frame,
    pub label: Label,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_weaks_per_stage: usize,
    pub n_stages: usize,
    /// Fraction of training positives each stage must keep.
    pub stage_tpr_target: f64,
    pub feature_stride: u32,
    pub epsilon_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_weaks_per_stage: 8,
            n_stages: 4,
            stage_tpr_target: 0.995,
            feature_stride: 2,
            epsilon_clamp: 1e-10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Domain(m.into()));
        if self.max_weaks_per_stage < 1 {
            return bad("max_weaks_per_stage must be at least 1");
        }
        if self.n_stages < 1 {
            return bad("n_stages must be at least 1");
        }
        if !(self.stage_tpr_target > 0.0 && self.stage_tpr_target <= 1.0) {
            return bad("stage_tpr_target must lie in (0, 1]");
        }
        if self.feature_stride < 1 {
            return bad("feature_stride must be at least 1");
        }
        if !(self.epsilon_clamp > 0.0 && self.epsilon_clamp < 0.5) {
            return bad("epsilon_clamp must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// All 3x3 block grids on the stride lattice that fit the window: anchors
/// are multiples of `stride`, block sizes are positive multiples of
/// `stride`. Ordered by block height, block width, then anchor row and column.
pub fn enumerate_features(window_w: u32, window_h: u32, stride: u32) -> Result<Vec<MbLbpFeature>, TrainError> {
    if window_w < 3 || window_h < 3 {
        return Err(TrainError::Domain(format!("window {window_w}x{window_h} is smaller than 3x3")));
    }
    if stride < 1 {
        return Err(TrainError::Domain("feature stride must be at least 1".into()));
    }
    let mut out = Vec::new();
    let s = stride as usize;
    for bh in (s..=window_h as usize / 3).step_by(s) {
        for bw in (s..=window_w as usize / 3).step_by(s) {
            for by in (0..=window_h as usize - 3 * bh).step_by(s) {
                for bx in (0..=window_w as usize - 3 * bw).step_by(s) {
                    out.push(MbLbpFeature::new(bx as u32, by as u32, bw as u32, bh as u32));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(TrainError::Domain(format!(
            "stride {stride} leaves no features in a {window_w}x{window_h} window"
        )));
    }
    Ok(out)
}

/// LBP codes of every feature on every sample, feature-major.
#[derive(Debug, Clone)]
pub struct CodeTable {
    n_samples: usize,
    codes: Vec<u8>,
}

impl CodeTable {
    pub fn new(integrals: &[IntegralImage], features: &[MbLbpFeature]) -> Result<Self, TrainError> {
        let rows: Vec<Vec<u8>> = features
            .par_iter()
            .map(|f| {
                integrals
                    .iter()
                    .map(|ii| lbp_code(ii, f, (0, 0), 1.0))
                    .collect::<Result<Vec<u8>, MbLbpError>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(CodeTable {
            n_samples: integrals.len(),
            codes: rows.concat(),
        })
    }

    pub fn from_samples(samples: &[TrainSample], features: &[MbLbpFeature]) -> Result<Self, TrainError> {
        let integrals: Vec<IntegralImage> = samples.iter().map(|s| integral(&s.window)).collect();
        CodeTable::new(&integrals, features)
    }

    pub fn codes(&self, feature: usize) -> &[u8] {
        &self.codes[feature * self.n_samples..(feature + 1) * self.n_samples]
    }

    pub fn n_features(&self) -> usize {
        self.codes.len().checked_div(self.n_samples).unwrap_or(0)
    }
}

/// Majority subset for one feature and its weighted error.
fn fit_subset(samples: &[TrainSample], codes: &[u8]) -> (CodeSubset, f64) {
    let mut pos = [0.0f64; 256];
    let mut neg = [0.0f64; 256];
    for (s, &c) in samples.iter().zip(codes) {
        match s.label {
            Label::Positive => pos[c as usize] += s.weight,
            Label::Negative => neg[c as usize] += s.weight,
        }
    }
    let mut subset = CodeSubset::EMPTY;
    let mut err = 0.0;
    for c in 0..256 {
        if pos[c] > neg[c] {
            subset.insert(c as u8);
            err += neg[c];
        } else {
            err += pos[c];
        }
    }
    (subset, err)
}

/// Minimum-weighted-error stump over all features; ties go to the first
/// feature in table order. Votes are +1 inside the subset, -1 outside.
pub fn best_weak(samples: &[TrainSample], table: &CodeTable) -> Result<(WeakClassifier, f64), TrainError> {
    if samples.is_empty() || table.n_features() == 0 {
        return Err(TrainError::Domain("best_weak needs samples and features".into()));
    }
    if table.n_samples != samples.len() {
        return Err(TrainError::Domain("code table does not match the sample set".into()));
    }
    let fits: Vec<(CodeSubset, f64)> = (0..table.n_features())
        .into_par_iter()
        .map(|f| fit_subset(samples, table.codes(f)))
        .collect();
    let (mut best, mut best_err) = (0, f64::INFINITY);
    for (i, &(_, e)) in fits.iter().enumerate() {
        if e < best_err {
            best = i;
            best_err = e;
        }
    }
    Ok((
        WeakClassifier {
            feature_index: best,
            subset: fits[best].0,
            leaf_in: 1.0,
            leaf_out: -1.0,
        },
        best_err,
    ))
}

/// One AdaBoost reweighting. Returns `alpha = 0.5 ln((1 - e) / e)` with `e`
/// clamped to `[clamp, 1 - clamp]`; weights end normalized to 1.
pub fn boost_round(samples: &mut [TrainSample], correct: &[bool], error: f64, clamp: f64) -> f64 {
    assert_eq!(samples.len(), correct.len(), "one correctness flag per sample");
    let e = error.clamp(clamp, 1.0 - clamp);
    let alpha = 0.5 * ((1.0 - e) / e).ln();
    let (up, down) = (alpha.exp(), (-alpha).exp());
    for (s, &ok) in samples.iter_mut().zip(correct) {
        s.weight *= if ok { down } else { up };
    }
    normalize(samples);
    alpha
}

fn normalize(samples: &mut [TrainSample]) {
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    for s in samples.iter_mut() {
        s.weight /= total;
    }
}

fn check_labels(samples: &[TrainSample]) -> Result<(), TrainError> {
    let has = |l: Label| samples.iter().any(|s| s.label == l);
    if !has(Label::Positive) || !has(Label::Negative) {
        return Err(TrainError::Domain("training needs both positive and negative samples".into()));
    }
    Ok(())
}

/// Largest `t` with at least `target` of the scores `>= t`.
pub fn tpr_threshold(scores: &[f64], target: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let mut k = ((target * n as f64).ceil() as usize).clamp(1, n);
    // guard against ceil overshooting on inexact products like 0.995 * 200
    while k > 1 && (k - 1) as f64 >= target * n as f64 {
        k -= 1;
    }
    sorted[k - 1]
}

/// Stage scores of `samples` through the shared evaluator.
pub fn stage_scores(samples: &[TrainSample], window: (u32, u32), features: &[MbLbpFeature], stage: &Stage) -> Result<Vec<f64>, TrainError> {
    let model = CascadeModel::new(window.0, window.1, features.to_vec(), vec![stage.clone()])?;
    let sc = model.at_scale(1.0);
    samples
        .iter()
        .map(|s| Ok(sc.stage_sum(&integral(&s.window), 0, 0, 0)?))
        .collect()
}

/// Boosts one stage. Weak feature indices refer to `features`.
pub fn train_stage(samples: &mut [TrainSample], features: &[MbLbpFeature], config: &TrainConfig) -> Result<Stage, TrainError> {
    config.validate()?;
    check_labels(samples)?;
    let window = (samples[0].window.width(), samples[0].window.height());
    normalize(samples);
    let table = CodeTable::from_samples(samples, features)?;
    let mut weaks = Vec::new();
    for _ in 0..config.max_weaks_per_stage {
        let (weak, err) = best_weak(samples, &table)?;
        if err >= 0.5 && !weaks.is_empty() {
            break;
        }
        let codes = table.codes(weak.feature_index);
        let correct: Vec<bool> = samples
            .iter()
            .zip(codes)
            .map(|(s, &c)| weak.subset.contains(c) == (s.label == Label::Positive))
            .collect();
        let alpha = boost_round(samples, &correct, err, config.epsilon_clamp);
        weaks.push(WeakClassifier {
            leaf_in: alpha,
            leaf_out: -alpha,
            ..weak
        });
        if err < config.epsilon_clamp {
            break;
        }
    }
    let mut stage = Stage { threshold: 0.0, weaks };
    let pos: Vec<TrainSample> = samples.iter().filter(|s| s.label == Label::Positive).cloned().collect();
    let scores = stage_scores(&pos, window, features, &stage)?;
    stage.threshold = tpr_threshold(&scores, config.stage_tpr_target);
    Ok(stage)
}

/// Trains stages in sequence. After each stage, samples the cascade already
/// rejects are dropped; training stops at `n_stages` or when no negatives
/// remain. Unused features are pruned from the returned model.
pub fn train_cascade(pos: &[Frame], neg: &[Frame], config: &TrainConfig) -> Result<CascadeModel, TrainError> {
    config.validate()?;
    if pos.is_empty() || neg.is_empty() {
        return Err(TrainError::Domain("training needs both positive and negative samples".into()));
    }
    let (ww, wh) = (pos[0].width(), pos[0].height());
    if let Some(f) = pos.iter().chain(neg).find(|f| (f.width(), f.height()) != (ww, wh)) {
        return Err(TrainError::Domain(format!(
            "sample of {}x{} does not match the {ww}x{wh} window",
            f.width(),
            f.height()
        )));
    }
    let features = enumerate_features(ww, wh, config.feature_stride)?;
    let mut pos: Vec<Frame> = pos.to_vec();
    let mut neg: Vec<Frame> = neg.to_vec();
    let mut stages = Vec::new();
    while stages.len() < config.n_stages && !neg.is_empty() && !pos.is_empty() {
        let mut samples: Vec<TrainSample> = pos
            .iter()
            .map(|f| (f, Label::Positive))
            .chain(neg.iter().map(|f| (f, Label::Negative)))
            .map(|(f, label)| TrainSample {
                window: f.clone(),
                label,
                weight: 1.0,
            })
            .collect();
        let stage = train_stage(&mut samples, &features, config)?;
        let scores = stage_scores(&samples, (ww, wh), &features, &stage)?;
        let n_pos = pos.len();
        let keep = |i: usize| scores[i] >= stage.threshold;
        pos = pos.into_iter().enumerate().filter(|&(i, _)| keep(i)).map(|(_, f)| f).collect();
        neg = neg.into_iter().enumerate().filter(|&(i, _)| keep(n_pos + i)).map(|(_, f)| f).collect();
        log::info!(
            "stage {}: {} weaks, threshold {:.4}, {} positives and {} negatives remain",
            stages.len(),
            stage.weaks.len(),
            stage.threshold,
            pos.len(),
            neg.len()
        );
        stages.push(stage);
    }
    Ok(compact(ww, wh, &features, stages)?)
}

fn compact(ww: u32, wh: u32, features: &[MbLbpFeature], mut stages: Vec<Stage>) -> Result<CascadeModel, MbLbpError> {
    let mut remap = vec![usize::MAX; features.len()];
    let mut used = Vec::new();
    for w in stages.iter_mut().flat_map(|s| s.weaks.iter_mut()) {
        if remap[w.feature_index] == usize::MAX {
            remap[w.feature_index] = used.len();
            used.push(features[w.feature_index]);
        }
        w.feature_index = remap[w.feature_index];
    }
    CascadeModel::new(ww, wh, used, stages)
}

/// Reads every `.pgm` in `dir` (lexicographic order).
pub fn load_window_dir(dir: &Path) -> Result<Vec<Frame>, TrainError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|source| ImageError::Io {
            path: dir.to_owned(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    Ok(paths.iter().map(|p| read_pgm_file(p)).collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mblbp::eval_window;

    fn brute_force_count(ww: u32, wh: u32, stride: u32) -> usize {
        let mut n = 0;
        for bx in 0..ww {
            for by in 0..wh {
                for bw in 1..=ww {
                    for bh in 1..=wh {
                        let on_grid = bx % stride == 0 && by % stride == 0 && bw % stride == 0 && bh % stride == 0;
                        if on_grid && bx + 3 * bw <= ww && by + 3 * bh <= wh {
                            n += 1;
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn feature_counts_match_brute_force() {
        assert_eq!(enumerate_features(3, 3, 1).unwrap(), vec![MbLbpFeature::new(0, 0, 1, 1)]);
        assert_eq!(brute_force_count(6, 3, 1), 5);
        assert_eq!(enumerate_features(6, 3, 1).unwrap().len(), 5);
        let full = enumerate_features(48, 24, 2).unwrap();
        assert_eq!(full.len(), brute_force_count(48, 24, 2));
        assert_eq!(full.len(), 2024);
        assert!(full.iter().all(|f| f.fits_window(48, 24)));
        assert_eq!(enumerate_features(12, 9, 1).unwrap().len(), brute_force_count(12, 9, 1));
    }

    #[test]
    fn feature_order_is_bh_bw_by_bx() {
        let f = enumerate_features(6, 6, 1).unwrap();
        let key = |m: &MbLbpFeature| (m.bh, m.bw, m.by, m.bx);
        assert!(f.windows(2).all(|w| key(&w[0]) < key(&w[1])));
    }

    #[test]
    fn tiny_window_rejected() {
        assert!(enumerate_features(2, 3, 1).is_err());
        assert!(enumerate_features(3, 3, 2).is_err());
    }

    fn center_window(bright_center: bool, noise: u8) -> Frame {
        let mut px = vec![100u8 + noise; 9];
        px[4] = if bright_center { 200 } else { 10 };
        Frame::new(3, 3, px).unwrap()
    }

    fn sample(f: Frame, label: Label, weight: f64) -> TrainSample {
        TrainSample { window: f, label, weight }
    }

    #[test]
    fn separable_set_has_zero_error() {
        let mut s = vec![];
        for k in 0..4 {
            s.push(sample(center_window(true, k), Label::Positive, 0.125));
            s.push(sample(center_window(false, k), Label::Negative, 0.125));
        }
        let feats = enumerate_features(3, 3, 1).unwrap();
        let table = CodeTable::from_samples(&s, &feats).unwrap();
        let (w, err) = best_weak(&s, &table).unwrap();
        assert_eq!(err, 0.0);
        // bright center gives code 0, dark center code 255
        assert!(w.subset.contains(0));
        assert!(!w.subset.contains(255));
    }

    #[test]
    fn indistinguishable_pair_has_half_error() {
        let f = center_window(true, 0);
        let s = vec![sample(f.clone(), Label::Positive, 0.5), sample(f, Label::Negative, 0.5)];
        let feats = enumerate_features(3, 3, 1).unwrap();
        let (w, err) = best_weak(&s, &CodeTable::from_samples(&s, &feats).unwrap()).unwrap();
        assert_eq!(err, 0.5);
        assert!(w.subset.is_empty(), "ties exclude the code");
    }

    #[test]
    fn boost_round_closed_form() {
        let mut s: Vec<TrainSample> = (0..4).map(|_| sample(center_window(true, 0), Label::Positive, 0.25)).collect();
        let correct = [true, true, true, false];
        let alpha = boost_round(&mut s, &correct, 0.25, 1e-10);
        assert!((alpha - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((alpha - 0.5493).abs() < 1e-4);
        let total: f64 = s.iter().map(|x| x.weight).sum();
        assert!((total - 1.0).abs() <= 1e-12);
        assert!((s[3].weight - 0.5).abs() <= 1e-12);

        let mut t = s.clone();
        let a0 = boost_round(&mut t, &[true; 4], 0.0, 1e-10);
        assert!(a0.is_finite());
        assert!((a0 - 0.5 * ((1.0 - 1e-10) / 1e-10f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn tpr_threshold_definition() {
        let scores = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(tpr_threshold(&scores, 1.0), -1.0);
        assert_eq!(tpr_threshold(&scores, 0.75), 0.3);
        assert_eq!(tpr_threshold(&scores, 0.5), 0.5);
        let many: Vec<f64> = (0..200).map(|i| i as f64).collect();
        // 0.995 * 200 = 199 positives must pass
        assert_eq!(tpr_threshold(&many, 0.995), 1.0);
    }

    #[test]
    fn separable_stage_splits_labels() {
        let mut s = vec![];
        for k in 0..5 {
            s.push(sample(center_window(true, k), Label::Positive, 1.0));
            s.push(sample(center_window(false, k), Label::Negative, 1.0));
        }
        let feats = enumerate_features(3, 3, 1).unwrap();
        let cfg = TrainConfig { max_weaks_per_stage: 1, ..Default::default() };
        let stage = train_stage(&mut s, &feats, &cfg).unwrap();
        assert_eq!(stage.weaks.len(), 1);
        let scores = stage_scores(&s, (3, 3), &feats, &stage).unwrap();
        for (smp, sc) in s.iter().zip(&scores) {
            assert_eq!(*sc >= stage.threshold, smp.label == Label::Positive);
        }
    }

    #[test]
    fn stage_rejects_single_label() {
        let mut s = vec![sample(center_window(true, 0), Label::Positive, 1.0)];
        let feats = enumerate_features(3, 3, 1).unwrap();
        assert!(matches!(train_stage(&mut s, &feats, &TrainConfig::default()), Err(TrainError::Domain(_))));
    }

    #[test]
    fn duplicate_samples_keep_target_rate() {
        // the same window labelled both ways cannot be separated
        let mut s = vec![];
        for k in 0..6 {
            let f = center_window(k % 2 == 0, 0);
            s.push(sample(f.clone(), Label::Positive, 1.0));
            s.push(sample(f, Label::Negative, 1.0));
        }
        let feats = enumerate_features(3, 3, 1).unwrap();
        let cfg = TrainConfig { max_weaks_per_stage: 3, stage_tpr_target: 0.8, ..Default::default() };
        let stage = train_stage(&mut s, &feats, &cfg).unwrap();
        let pos: Vec<TrainSample> = s.iter().filter(|x| x.label == Label::Positive).cloned().collect();
        let scores = stage_scores(&pos, (3, 3), &feats, &stage).unwrap();
        let passed = scores.iter().filter(|&&v| v >= stage.threshold).count();
        assert!(passed as f64 >= 0.8 * pos.len() as f64);
    }

    #[test]
    fn cascade_on_separable_set() {
        let pos: Vec<Frame> = (0..4).map(|k| center_window(true, k)).collect();
        let neg: Vec<Frame> = (0..4).map(|k| center_window(false, k)).collect();
        let cfg = TrainConfig { n_stages: 3, feature_stride: 1, ..Default::default() };
        let model = train_cascade(&pos, &neg, &cfg).unwrap();
        // every negative falls at stage 0, so training stops there
        assert_eq!(model.stages.len(), 1);
        for f in &pos {
            assert!(eval_window(&integral(f), &model, (0, 0), 1.0).unwrap());
        }
        for f in &neg {
            assert!(!eval_window(&integral(f), &model, (0, 0), 1.0).unwrap());
        }
        let reloaded = crate::mblbp::load_model(&crate::mblbp::save_model(&model)).unwrap();
        for f in pos.iter().chain(&neg) {
            let ii = integral(f);
            assert_eq!(
                eval_window(&ii, &model, (0, 0), 1.0).unwrap(),
                eval_window(&ii, &reloaded, (0, 0), 1.0).unwrap()
            );
        }
    }

    #[test]
    fn cascade_rejects_mismatched_windows() {
        let pos = vec![center_window(true, 0)];
        let neg = vec![Frame::filled(4, 4, 0).unwrap()];
        assert!(train_cascade(&pos, &neg, &TrainConfig::default()).is_err());
        assert!(train_cascade(&pos, &[], &TrainConfig::default()).is_err());
    }

    /// Minimum error over every feature and every subset of its observed codes.
    fn exhaustive_min_error(samples: &[TrainSample], features: &[MbLbpFeature]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (fi, f) in features.iter().enumerate() {
            let codes: Vec<u8> = samples
                .iter()
                .map(|s| lbp_code(&integral(&s.window), f, (0, 0), 1.0).unwrap())
                .collect();
            let mut seen: Vec<u8> = codes.clone();
            seen.sort_unstable();
            seen.dedup();
            for mask in 0u32..(1 << seen.len()) {
                let inside = |c: u8| mask >> seen.iter().position(|&v| v == c).unwrap() & 1 == 1;
                let err: f64 = samples
                    .iter()
                    .zip(&codes)
                    .filter(|(s, &c)| inside(c) != (s.label == Label::Positive))
                    .map(|(s, _)| s.weight)
                    .sum();
                if err < best.1 {
                    best = (fi, err);
                }
            }
        }
        best
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn best_weak_matches_exhaustive_argmin(
            raw in proptest::collection::vec(
                (proptest::collection::vec(0u8..4, 18), proptest::bool::ANY, 1u32..16),
                2..9,
            )
        ) {
            // pixel levels and weights are small dyadic values so every sum is exact
            let samples: Vec<TrainSample> = raw
                .into_iter()
                .map(|(px, pos, w)| {
                    let px = px.into_iter().map(|v| v * 60).collect();
                    let label = if pos { Label::Positive } else { Label::Negative };
                    sample(Frame::new(6, 3, px).unwrap(), label, w as f64 / 64.0)
                })
                .collect();
            let feats = enumerate_features(6, 3, 1).unwrap();
            let table = CodeTable::from_samples(&samples, &feats).unwrap();
            let (weak, err) = best_weak(&samples, &table).unwrap();
            let (oracle_feature, oracle_err) = exhaustive_min_error(&samples, &feats);
            proptest::prop_assert_eq!(err, oracle_err);
            proptest::prop_assert_eq!(weak.feature_index, oracle_feature);
            let recomputed: f64 = samples
                .iter()
                .zip(table.codes(weak.feature_index))
                .filter(|(s, &c)| weak.subset.contains(c) != (s.label == Label::Positive))
                .map(|(s, _)| s.weight)
                .sum();
            proptest::prop_assert_eq!(recomputed, err);
        }
    }
}
