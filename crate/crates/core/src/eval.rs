//! Recognition (AUROC) and description (AP) metrics.
//!
//! A prediction is a true positive for a variant only when it clears every
//! criterion the variant includes: box IoU, axis EA-score, and surface
//! normal angle error.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::{FRAC_PI_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{acute_line_angle, ArticulationKind, ProjectedAxis, Vec2, Vec3, UNIT_TOL};
use crate::par::Exec;
use crate::raster::{bbox_iou, Box2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalThresholds {
    pub bbox_iou: f64,
    pub ea_score: f64,
    pub normal_deg: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self { bbox_iou: 0.5, ea_score: 0.5, normal_deg: 30.0 }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bbox_iou)
            || !(0.0..=1.0).contains(&self.ea_score)
            || !(0.0..=90.0).contains(&self.normal_deg)
        {
            return Err(Error::InvalidConfig("evaluation thresholds out of range".into()));
        }
        Ok(())
    }
}

/// Which criteria a true positive must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "bbox")]
    Bbox,
    #[serde(rename = "bbox+axis")]
    BboxAxis,
    #[serde(rename = "bbox+axis+normal")]
    BboxAxisNormal,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Bbox, Variant::BboxAxis, Variant::BboxAxisNormal];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Bbox => "bbox",
            Variant::BboxAxis => "bbox+axis",
            Variant::BboxAxisNormal => "bbox+axis+normal",
        }
    }

    fn checks_axis(self) -> bool {
        self != Variant::Bbox
    }

    fn checks_normal(self) -> bool {
        self == Variant::BboxAxisNormal
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

/// Line similarity on the unit-normalized image: an angle term and a
/// midpoint-distance term, multiplied and squared.
pub fn ea_score(a: (Vec2, Vec2), b: (Vec2, Vec2), width: f64, height: f64) -> Result<f64> {
    let norm = |p: Vec2| Vec2::new(p.x / width, p.y / height);
    let (a0, a1, b0, b1) = (norm(a.0), norm(a.1), norm(b.0), norm(b.1));
    let (da, db) = (a1 - a0, b1 - b0);
    if da.norm() < 1e-12 || db.norm() < 1e-12 {
        return Err(Error::Degenerate("zero-length segment"));
    }
    let dtheta = acute_line_angle(da.y.atan2(da.x), db.y.atan2(db.x));
    let s_theta = (1.0 - dtheta / FRAC_PI_2).max(0.0);
    let dist = ((a0 + a1) * 0.5 - (b0 + b1) * 0.5).norm();
    let s_dist = (1.0 - dist / SQRT_2).max(0.0);
    Ok((s_theta * s_dist).powi(2))
}

/// 180-degree-ambiguous angle between two unit normals, in degrees.
pub fn normal_angle_error(pred: &Vec3, gt: &Vec3) -> Result<f64> {
    for v in [pred, gt] {
        if (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::NonUnit(v.norm()));
        }
    }
    Ok(pred.dot(gt).abs().clamp(0.0, 1.0).acos().to_degrees())
}

/// The image segment an axis is scored with. Rotation axes are clipped to
/// the image. Translation axes only carry a direction, so they are drawn
/// through the image center.
pub fn axis_segment(axis: &ProjectedAxis, kind: ArticulationKind, width: f64, height: f64) -> Option<(Vec2, Vec2)> {
    match kind {
        ArticulationKind::Rotation => axis.clip_to_image(width, height),
        ArticulationKind::Translation => {
            let c = Vec2::new(width / 2.0, height / 2.0);
            let line = ProjectedAxis::new(axis.theta, axis.normal().dot(&c)).ok()?;
            line.clip_to_image(width, height)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPrediction {
    pub clip: String,
    pub frame: u32,
    pub category: ArticulationKind,
    pub score: f64,
    pub bbox: Box2D,
    pub axis: Option<ProjectedAxis>,
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalGroundTruth {
    pub clip: String,
    pub frame: u32,
    pub articulating: bool,
    pub category: ArticulationKind,
    pub bbox: Box2D,
    /// Absent when the axis falls outside the image; waives the axis check.
    pub axis: Option<ProjectedAxis>,
    pub normal: Vec3,
    pub width: u32,
    pub height: u32,
}

impl EvalGroundTruth {
    fn accepts(&self, p: &EvalPrediction, th: &EvalThresholds, variant: Variant) -> Option<f64> {
        let iou = bbox_iou(&p.bbox, &self.bbox);
        if iou < th.bbox_iou {
            return None;
        }
        if variant.checks_axis() {
            if let Some(gt_axis) = &self.axis {
                let (w, h) = (self.width as f64, self.height as f64);
                let gt_seg = axis_segment(gt_axis, self.category, w, h);
                let pred_seg = p.axis.and_then(|a| axis_segment(&a, self.category, w, h));
                let ea = match (pred_seg, gt_seg) {
                    (Some(a), Some(b)) => ea_score(a, b, w, h).unwrap_or(0.0),
                    (_, None) => 1.0,
                    (None, Some(_)) => 0.0,
                };
                if ea < th.ea_score {
                    return None;
                }
            }
        }
        if variant.checks_normal() {
            let err = normal_angle_error(&p.normal, &self.normal).ok()?;
            if err > th.normal_deg {
                return None;
            }
        }
        Some(iou)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub variant: Variant,
    pub category: ArticulationKind,
    /// `None` when there are no ground-truth instances.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_pred: usize,
    pub curve: Vec<PrPoint>,
}

/// All-point interpolated area under a precision-recall sweep.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        ap += (p.recall - prev) * env;
        prev = p.recall;
    }
    ap
}

/// Greedy matching in descending confidence within each clip, frame and
/// category; each ground truth is claimed at most once, by the passing
/// prediction with the highest box IoU.
pub fn evaluate_ap(
    preds: &[EvalPrediction],
    gts: &[EvalGroundTruth],
    th: &EvalThresholds,
    variant: Variant,
    category: ArticulationKind,
) -> ApResult {
    let gts: Vec<&EvalGroundTruth> = gts.iter().filter(|g| g.articulating && g.category == category).collect();
    let mut by_frame: HashMap<(&str, u32), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_frame.entry((g.clip.as_str(), g.frame)).or_default().push(i);
    }
    let mut preds: Vec<&EvalPrediction> = preds.iter().filter(|p| p.category == category).collect();
    preds.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut claimed = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for &g in by_frame.get(&(p.clip.as_str(), p.frame)).map(Vec::as_slice).unwrap_or(&[]) {
            if claimed[g] {
                continue;
            }
            if let Some(iou) = gts[g].accepts(p, th, variant) {
                if best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, g));
                }
            }
        }
        if let Some((_, g)) = best {
            claimed[g] = true;
            tp += 1;
        }
        let recall = if gts.is_empty() { 0.0 } else { tp as f64 / gts.len() as f64 };
        curve.push(PrPoint { precision: tp as f64 / (i + 1) as f64, recall });
    }
    let ap = (!gts.is_empty()).then(|| average_precision(&curve));
    ApResult { variant, category, ap, num_gt: gts.len(), num_pred: preds.len(), curve }
}

/// Area under the ROC curve as the Mann-Whitney statistic; ties count 1/2.
pub fn evaluate_auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidRecord("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("recognition score"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie block
        let rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * rank;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Max prediction confidence per `(clip, frame)`, 0 for frames without one.
pub fn frame_recognition_scores(preds: &[EvalPrediction], frames: &[(String, u32)]) -> Vec<f64> {
    let mut best: HashMap<(&str, u32), f64> = HashMap::new();
    for p in preds {
        let e = best.entry((p.clip.as_str(), p.frame)).or_insert(0.0);
        *e = e.max(p.score);
    }
    frames.iter().map(|(c, f)| best.get(&(c.as_str(), *f)).copied().unwrap_or(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: EvalThresholds,
    /// `None` when every frame carries the same label.
    pub auroc: Option<f64>,
    pub num_frames: usize,
    pub num_positive_frames: usize,
    pub ap: Vec<ApResult>,
}

impl EvalReport {
    pub fn ap_for(&self, variant: Variant, category: ArticulationKind) -> Option<f64> {
        self.ap.iter().find(|r| r.variant == variant && r.category == category).and_then(|r| r.ap)
    }
}

/// Full protocol: AUROC over every ground-truth frame plus AP for each
/// variant and category. Predictions on frames absent from the ground truth
/// are an error.
pub fn evaluate(preds: &[EvalPrediction], gts: &[EvalGroundTruth], th: &EvalThresholds, exec: Exec) -> Result<EvalReport> {
    th.validate()?;
    let known: HashSet<(&str, u32)> = gts.iter().map(|g| (g.clip.as_str(), g.frame)).collect();
    if let Some(p) = preds.iter().find(|p| !known.contains(&(p.clip.as_str(), p.frame))) {
        return Err(Error::InvalidRecord(format!(
            "prediction for clip {:?} frame {} has no ground-truth frame",
            p.clip, p.frame
        )));
    }
    // one label per frame: positive if any annotation there articulates
    let mut frame_labels: BTreeMap<(String, u32), bool> = BTreeMap::new();
    for g in gts {
        *frame_labels.entry((g.clip.clone(), g.frame)).or_insert(false) |= g.articulating;
    }
    let frames: Vec<(String, u32)> = frame_labels.keys().cloned().collect();
    let labels: Vec<bool> = frame_labels.values().copied().collect();
    let scores = frame_recognition_scores(preds, &frames);
    let auroc = match evaluate_auroc(&scores, &labels) {
        Ok(v) => Some(v),
        Err(Error::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let jobs: Vec<(Variant, ArticulationKind)> = [ArticulationKind::Rotation, ArticulationKind::Translation]
        .into_iter()
        .flat_map(|c| Variant::ALL.into_iter().map(move |v| (v, c)))
        .collect();
    let ap = exec.map(&jobs, |&(v, c)| evaluate_ap(preds, gts, th, v, c));
    Ok(EvalReport {
        thresholds: *th,
        auroc,
        num_frames: labels.len(),
        num_positive_frames: labels.iter().filter(|l| **l).count(),
        ap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn ea_score_examples() {
        let a = (v(0.0, 0.0), v(100.0, 50.0));
        assert!((ea_score(a, a, 100.0, 100.0).unwrap() - 1.0).abs() < 1e-12);
        let h = (v(0.0, 50.0), v(100.0, 50.0));
        let vert = (v(50.0, 0.0), v(50.0, 100.0));
        assert_eq!(ea_score(h, vert, 100.0, 100.0).unwrap(), 0.0);
        // same diagonal line, midpoints half the normalized diagonal apart
        let s1 = (v(0.0, 0.0), v(50.0, 50.0));
        let s2 = (v(50.0, 50.0), v(100.0, 100.0));
        assert!((ea_score(s1, s2, 100.0, 100.0).unwrap() - 0.25).abs() < 1e-12);
        assert!(ea_score((v(1.0, 1.0), v(1.0, 1.0)), h, 100.0, 100.0).is_err());
    }

    proptest! {
        #[test]
        fn ea_score_symmetric_and_bounded(c in proptest::collection::vec(0.0f64..200.0, 8)) {
            let a = (v(c[0], c[1]), v(c[2], c[3]));
            let b = (v(c[4], c[5]), v(c[6], c[7]));
            prop_assume!((a.1 - a.0).norm() > 1e-3 && (b.1 - b.0).norm() > 1e-3);
            let ab = ea_score(a, b, 200.0, 150.0).unwrap();
            prop_assert!((ab - ea_score(b, a, 200.0, 150.0).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn normal_error_examples() {
        let z = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(normal_angle_error(&z, &z).unwrap(), 0.0);
        assert_eq!(normal_angle_error(&z, &-z).unwrap(), 0.0);
        let tilted = Vec3::new(0.0, 30f64.to_radians().sin(), 30f64.to_radians().cos());
        assert!((normal_angle_error(&z, &tilted).unwrap() - 30.0).abs() < 1e-9);
        assert!(matches!(normal_angle_error(&(z * 2.0), &z), Err(Error::NonUnit(_))));
    }

    fn gt(frame: u32, axis: Option<ProjectedAxis>) -> EvalGroundTruth {
        EvalGroundTruth {
            clip: "c".into(),
            frame,
            articulating: true,
            category: ArticulationKind::Rotation,
            bbox: Box2D::new(10.0, 10.0, 50.0, 90.0).unwrap(),
            axis,
            normal: Vec3::new(0.0, 0.0, 1.0),
            width: 100,
            height: 100,
        }
    }

    fn pred(frame: u32, score: f64, bbox: Box2D, axis: Option<ProjectedAxis>, normal: Vec3) -> EvalPrediction {
        EvalPrediction { clip: "c".into(), frame, category: ArticulationKind::Rotation, score, bbox, axis, normal }
    }

    #[test]
    fn ap_examples() {
        let th = EvalThresholds::default();
        let hinge = ProjectedAxis::new(0.0, 10.0).ok();
        let g = vec![gt(0, hinge)];
        let good = pred(0, 0.9, g[0].bbox, hinge, Vec3::z());
        let r = evaluate_ap(std::slice::from_ref(&good), &g, &th, Variant::BboxAxisNormal, ArticulationKind::Rotation);
        assert_eq!(r.ap, Some(1.0));

        let miss = pred(0, 0.95, Box2D::new(60.0, 0.0, 99.0, 20.0).unwrap(), hinge, Vec3::z());
        let late = pred(0, 0.5, g[0].bbox, hinge, Vec3::z());
        let r = evaluate_ap(&[miss, late], &g, &th, Variant::Bbox, ArticulationKind::Rotation);
        assert!((r.ap.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.curve[0], PrPoint { precision: 0.0, recall: 0.0 });
        assert_eq!(r.curve[1], PrPoint { precision: 0.5, recall: 1.0 });
    }

    #[test]
    fn normal_beyond_threshold_is_false_positive() {
        let th = EvalThresholds::default();
        let hinge = ProjectedAxis::new(0.0, 10.0).ok();
        let g = gt(0, hinge);
        // box IoU 0.8: shrink the 40x80 box to 32x80
        let b = Box2D::new(10.0, 10.0, 42.0, 90.0).unwrap();
        assert!((bbox_iou(&b, &g.bbox) - 0.8).abs() < 1e-12);
        let a = ProjectedAxis::new(0.0, 12.0).ok();
        let ea = ea_score(axis_segment(&a.unwrap(), g.category, 100.0, 100.0).unwrap(),
                          axis_segment(&hinge.unwrap(), g.category, 100.0, 100.0).unwrap(), 100.0, 100.0).unwrap();
        assert!(ea > 0.9);
        let n35 = Vec3::new(35f64.to_radians().sin(), 0.0, 35f64.to_radians().cos());
        let p = pred(0, 0.9, b, a, n35);
        let gts = [g];
        let strict = evaluate_ap(std::slice::from_ref(&p), &gts, &th, Variant::BboxAxisNormal, ArticulationKind::Rotation);
        assert_eq!(strict.ap, Some(0.0));
        let loose = evaluate_ap(&[p], &gts, &th, Variant::BboxAxis, ArticulationKind::Rotation);
        assert_eq!(loose.ap, Some(1.0));
    }

    #[test]
    fn missing_gt_axis_waives_axis_check() {
        let th = EvalThresholds::default();
        let g = [gt(0, None)];
        let p = pred(0, 0.9, g[0].bbox, None, Vec3::z());
        assert_eq!(evaluate_ap(&[p], &g, &th, Variant::BboxAxisNormal, ArticulationKind::Rotation).ap, Some(1.0));
        // but a prediction lacking an axis fails when GT has one
        let g = [gt(0, ProjectedAxis::new(0.0, 10.0).ok())];
        let p = pred(0, 0.9, g[0].bbox, None, Vec3::z());
        assert_eq!(evaluate_ap(&[p], &g, &th, Variant::BboxAxis, ArticulationKind::Rotation).ap, Some(0.0));
    }

    #[test]
    fn each_gt_matches_once() {
        let th = EvalThresholds::default();
        let g = [gt(0, None)];
        let p1 = pred(0, 0.9, g[0].bbox, None, Vec3::z());
        let p2 = pred(0, 0.8, g[0].bbox, None, Vec3::z());
        let r = evaluate_ap(&[p1, p2], &g, &th, Variant::Bbox, ArticulationKind::Rotation);
        assert_eq!(r.curve[1], PrPoint { precision: 0.5, recall: 1.0 });
        assert_eq!(r.ap, Some(1.0));
    }

    /// Pair-counting oracle, independent of the rank formula.
    fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(evaluate_auroc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(evaluate_auroc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        let r = evaluate_auroc(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false]).unwrap();
        assert!((r - 0.75).abs() < 1e-12);
        assert_eq!(evaluate_auroc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass));
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_count(data in proptest::collection::vec((0u8..6, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
            let fast = evaluate_auroc(&scores, &labels).unwrap();
            prop_assert!((fast - auroc_pairs(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn appending_low_false_positive_never_raises_ap(n in 1usize..6, seed in any::<u64>()) {
            let th = EvalThresholds::default();
            let gts: Vec<EvalGroundTruth> = (0..n as u32).map(|f| gt(f, None)).collect();
            let mut preds: Vec<EvalPrediction> = (0..n as u32)
                .filter(|f| (seed >> f) & 1 == 1)
                .map(|f| pred(f, 0.5 + 0.05 * f as f64, gts[0].bbox, None, Vec3::z()))
                .collect();
            let before = evaluate_ap(&preds, &gts, &th, Variant::Bbox, ArticulationKind::Rotation).ap.unwrap();
            preds.push(pred(0, 0.01, Box2D::new(90.0, 90.0, 99.0, 99.0).unwrap(), None, Vec3::z()));
            let after = evaluate_ap(&preds, &gts, &th, Variant::Bbox, ArticulationKind::Rotation).ap.unwrap();
            prop_assert!(after <= before + 1e-15);
        }
    }

    #[test]
    fn report_flags_unknown_frames_and_single_class() {
        let th = EvalThresholds::default();
        let g = vec![gt(0, None)];
        let stray = pred(5, 0.9, g[0].bbox, None, Vec3::z());
        assert!(evaluate(&[stray], &g, &th, Exec::Sequential).is_err());
        let r = evaluate(&[], &g, &th, Exec::Sequential).unwrap();
        assert_eq!(r.auroc, None);
        assert_eq!(r.ap.len(), 6);
        assert_eq!(r.ap_for(Variant::Bbox, ArticulationKind::Rotation), Some(0.0));
        assert_eq!(r.ap_for(Variant::Bbox, ArticulationKind::Translation), None);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("bbox+normal".parse::<Variant>().is_err());
    }
}
