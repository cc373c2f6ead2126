//! JSON-lines wire records.
//!
//! Every data file holds one JSON object per line; keys appear in struct
//! field order. Masks are row-major run lengths whose first run counts
//! zeros. Polygon holes are not represented: masks are the only shape
//! carrier, and boundary tracing keeps outer contours only.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalGroundTruth, EvalPrediction};
use crate::fitting::ArticulationFit;
use crate::geometry::{ArticulationKind, Axis3D, CameraIntrinsics, Plane, ProjectedAxis, Vec3, UNIT_TOL};
use crate::raster::{rle_decode, rle_encode, Box2D, Mask};
use crate::synth::GroundTruthFrame;
use crate::tracking::{Detection, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleRecord {
    pub counts: Vec<u32>,
    pub width: u32,
    pub height: u32,
}

impl RleRecord {
    pub fn from_mask(m: &Mask) -> Self {
        Self { counts: rle_encode(m), width: m.width() as u32, height: m.height() as u32 }
    }

    pub fn to_mask(&self) -> Result<Mask> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidRecord("mask must be at least 1x1".into()));
        }
        rle_decode(&self.counts, self.width as usize, self.height as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRecord {
    pub theta: f64,
    pub p: f64,
}

impl AxisRecord {
    pub fn from_axis(a: &ProjectedAxis) -> Self {
        Self { theta: a.theta, p: a.p }
    }

    /// Rejects non-canonical angles instead of silently wrapping them.
    pub fn to_axis(&self) -> Result<ProjectedAxis> {
        if !(0.0..std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::InvalidRecord(format!("axis theta {} outside [0, pi)", self.theta)));
        }
        ProjectedAxis::new(self.theta, self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis3DRecord {
    pub kind: ArticulationKind,
    pub point: [f64; 3],
    pub direction: [f64; 3],
}

impl Axis3DRecord {
    pub fn from_axis(a: &Axis3D) -> Self {
        Self { kind: a.kind, point: vec3(&a.point), direction: vec3(&a.direction) }
    }

    pub fn to_axis(&self) -> Result<Axis3D> {
        let point = Vec3::from(self.point);
        let direction = unit(self.direction, "axis direction")?;
        if !point.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("axis point"));
        }
        Ok(Axis3D { kind: self.kind, point, direction })
    }
}

/// Array form with negative zeros cleared, so output never shows `-0.0`.
fn vec3(v: &Vec3) -> [f64; 3] {
    [v.x + 0.0, v.y + 0.0, v.z + 0.0]
}

fn unit(v: [f64; 3], what: &'static str) -> Result<Vec3> {
    let v = Vec3::from(v);
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::NonUnit(v.norm()));
    }
    Ok(v)
}

fn plane_from(normal: [f64; 3], offset: f64) -> Result<Plane> {
    let normal = unit(normal, "plane normal")?;
    if !offset.is_finite() {
        return Err(Error::NonFinite("plane offset"));
    }
    if offset < 0.0 {
        return Err(Error::InvalidRecord(format!("plane offset {offset} is negative")));
    }
    Ok(Plane { normal, offset })
}

fn box_from(b: [f64; 4]) -> Result<Box2D> {
    Box2D::new(b[0], b[1], b[2], b[3])
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A wire record with type invariants beyond what JSON decoding enforces.
pub trait Record: Serialize + DeserializeOwned {
    fn check(&self) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub clip_id: String,
    pub frame: u32,
    pub time_s: f64,
    pub category: ArticulationKind,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub mask: RleRecord,
    pub normal: [f64; 3],
    pub offset_m: f64,
    pub axis: Option<AxisRecord>,
}

impl DetectionRecord {
    pub fn from_detection(clip_id: &str, d: &Detection) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            frame: d.frame,
            time_s: d.time,
            category: d.category,
            score: d.score,
            bbox: d.bbox.to_array(),
            mask: RleRecord::from_mask(&d.mask),
            normal: vec3(&d.plane.normal),
            offset_m: d.plane.offset,
            axis: d.axis.as_ref().map(AxisRecord::from_axis),
        }
    }

    pub fn to_detection(&self) -> Result<Detection> {
        let d = Detection {
            frame: self.frame,
            time: finite(self.time_s, "time_s")?,
            bbox: box_from(self.bbox)?,
            mask: self.mask.to_mask()?,
            category: self.category,
            score: finite(self.score, "score")?,
            plane: plane_from(self.normal, self.offset_m)?,
            axis: self.axis.map(|a| a.to_axis()).transpose()?,
        };
        d.validate()?;
        Ok(d)
    }

    /// Raw detections scored as predictions, without any fitting.
    pub fn to_prediction(&self) -> EvalPrediction {
        EvalPrediction {
            clip: self.clip_id.clone(),
            frame: self.frame,
            category: self.category,
            score: self.score,
            bbox: Box2D { x_min: self.bbox[0], y_min: self.bbox[1], x_max: self.bbox[2], y_max: self.bbox[3] },
            axis: self.axis.map(|a| ProjectedAxis { theta: a.theta, p: a.p }),
            normal: Vec3::from(self.normal),
        }
    }
}

impl Record for DetectionRecord {
    fn check(&self) -> Result<()> {
        self.to_detection().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub clip_id: String,
    pub frame: u32,
    pub time_s: f64,
    pub articulating: bool,
    pub category: ArticulationKind,
    pub alpha: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub mask: RleRecord,
    pub normal: [f64; 3],
    pub offset_m: f64,
    pub axis: Option<AxisRecord>,
    pub axis3d: Axis3DRecord,
}

impl GroundTruthRecord {
    pub fn from_frame(clip_id: &str, g: &GroundTruthFrame) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            frame: g.frame,
            time_s: g.time,
            articulating: g.articulating,
            category: g.category,
            alpha: g.alpha,
            bbox: g.bbox.to_array(),
            mask: RleRecord::from_mask(&g.mask),
            normal: vec3(&g.plane.normal),
            offset_m: g.plane.offset,
            axis: g.axis.as_ref().map(AxisRecord::from_axis),
            axis3d: Axis3DRecord::from_axis(&g.axis3d),
        }
    }

    pub fn to_eval(&self) -> Result<EvalGroundTruth> {
        Ok(EvalGroundTruth {
            clip: self.clip_id.clone(),
            frame: self.frame,
            articulating: self.articulating,
            category: self.category,
            bbox: box_from(self.bbox)?,
            axis: self.axis.map(|a| a.to_axis()).transpose()?,
            normal: plane_from(self.normal, self.offset_m)?.normal,
            width: self.mask.width,
            height: self.mask.height,
        })
    }
}

impl Record for GroundTruthRecord {
    fn check(&self) -> Result<()> {
        finite(self.time_s, "time_s")?;
        finite(self.alpha, "alpha")?;
        self.mask.to_mask()?;
        self.axis3d.to_axis()?;
        if self.axis3d.kind != self.category {
            return Err(Error::InvalidRecord("axis3d kind disagrees with category".into()));
        }
        self.to_eval().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub clip_id: String,
    pub track_id: usize,
    pub category: ArticulationKind,
    pub frames: Vec<u32>,
    pub scores: Vec<f64>,
}

impl TrackRecord {
    pub fn from_track(clip_id: &str, t: &Track) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            track_id: t.id,
            category: t.category,
            frames: t.detections.iter().map(|d| d.frame).collect(),
            scores: t.detections.iter().map(|d| d.score).collect(),
        }
    }
}

impl Record for TrackRecord {
    fn check(&self) -> Result<()> {
        if self.frames.is_empty() || self.frames.len() != self.scores.len() {
            return Err(Error::InvalidRecord("track needs matching, non-empty frames and scores".into()));
        }
        if self.frames.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidRecord("track frames must be consecutive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    TooShort,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisRecord {
    pub reference_frame: u32,
    pub category: ArticulationKind,
    pub normal: [f64; 3],
    pub offset_m: f64,
    pub axis3d: Axis3DRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionRecord {
    pub k: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Per-frame output. `alpha` and `score` are null unless the track was
/// fitted; box and confidence come from the detection, normal and axis from
/// the fit when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFrameRecord {
    pub frame: u32,
    pub time_s: f64,
    pub alpha: Option<f64>,
    pub score: Option<f64>,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub normal: [f64; 3],
    pub offset_m: f64,
    pub axis: Option<AxisRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub clip_id: String,
    pub track_id: usize,
    pub category: ArticulationKind,
    pub status: FitStatus,
    pub reason: Option<String>,
    pub articulating: Option<bool>,
    pub mean_score: Option<f64>,
    pub hypothesis: Option<HypothesisRecord>,
    pub motion: Option<MotionRecord>,
    pub frames: Vec<FitFrameRecord>,
}

impl FitRecord {
    pub fn fitted(clip_id: &str, track: &Track, fit: &ArticulationFit, k: &CameraIntrinsics) -> Self {
        let hyp = &fit.hypothesis;
        let frames = track
            .detections
            .iter()
            .zip(&fit.frame_fits)
            .enumerate()
            .map(|(i, (d, f))| {
                let plane = fit.frame_plane(i);
                FitFrameRecord {
                    frame: d.frame,
                    time_s: d.time,
                    alpha: Some(f.alpha),
                    score: Some(f.score),
                    confidence: d.score,
                    bbox: d.bbox.to_array(),
                    normal: vec3(&plane.normal),
                    offset_m: plane.offset,
                    axis: fit.frame_axis(k, i).as_ref().map(AxisRecord::from_axis),
                }
            })
            .collect();
        Self {
            clip_id: clip_id.to_string(),
            track_id: track.id,
            category: track.category,
            status: FitStatus::Fitted,
            reason: None,
            articulating: Some(fit.articulating),
            mean_score: Some(fit.mean_score),
            hypothesis: Some(HypothesisRecord {
                reference_frame: hyp.reference_frame,
                category: hyp.category,
                normal: vec3(&hyp.plane.normal),
                offset_m: hyp.plane.offset,
                axis3d: Axis3DRecord::from_axis(&hyp.axis),
            }),
            motion: Some(MotionRecord { k: fit.motion.slope, intercept: fit.motion.intercept, r2: fit.motion.r_squared }),
            frames,
        }
    }

    /// A track that could not be fitted; per-frame values echo the detections.
    pub fn unfitted(clip_id: &str, track: &Track, status: FitStatus, reason: String) -> Self {
        let frames = track
            .detections
            .iter()
            .map(|d| FitFrameRecord {
                frame: d.frame,
                time_s: d.time,
                alpha: None,
                score: None,
                confidence: d.score,
                bbox: d.bbox.to_array(),
                normal: vec3(&d.plane.normal),
                offset_m: d.plane.offset,
                axis: d.axis.as_ref().map(AxisRecord::from_axis),
            })
            .collect();
        Self {
            clip_id: clip_id.to_string(),
            track_id: track.id,
            category: track.category,
            status,
            reason: Some(reason),
            articulating: None,
            mean_score: None,
            hypothesis: None,
            motion: None,
            frames,
        }
    }

    /// One prediction per frame of an articulating track; nothing otherwise.
    pub fn predictions(&self) -> Vec<EvalPrediction> {
        if self.articulating != Some(true) {
            return Vec::new();
        }
        self.frames
            .iter()
            .map(|f| EvalPrediction {
                clip: self.clip_id.clone(),
                frame: f.frame,
                category: self.category,
                score: f.confidence,
                bbox: Box2D { x_min: f.bbox[0], y_min: f.bbox[1], x_max: f.bbox[2], y_max: f.bbox[3] },
                axis: f.axis.map(|a| ProjectedAxis { theta: a.theta, p: a.p }),
                normal: Vec3::from(f.normal),
            })
            .collect()
    }
}

impl Record for FitRecord {
    fn check(&self) -> Result<()> {
        let fitted = self.status == FitStatus::Fitted;
        let set = [self.articulating.is_some(), self.mean_score.is_some(), self.hypothesis.is_some(), self.motion.is_some()];
        if set.iter().any(|&s| s != fitted) || fitted == self.reason.is_some() {
            return Err(Error::InvalidRecord(
                "fitted records need articulating, hypothesis and motion; others need a reason and nulls".into(),
            ));
        }
        if let Some(h) = &self.hypothesis {
            plane_from(h.normal, h.offset_m)?;
            h.axis3d.to_axis()?;
        }
        if self.frames.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return Err(Error::InvalidRecord("frames must be strictly increasing".into()));
        }
        for f in &self.frames {
            finite(f.time_s, "time_s")?;
            if f.alpha.is_some() != fitted || f.score.is_some() != fitted {
                return Err(Error::InvalidRecord("alpha and score are set exactly when fitted".into()));
            }
            if !(0.0..=1.0).contains(&f.confidence) {
                return Err(Error::InvalidRecord(format!("confidence {} outside [0, 1]", f.confidence)));
            }
            box_from(f.bbox)?;
            plane_from(f.normal, f.offset_m)?;
            f.axis.map(|a| a.to_axis()).transpose()?;
        }
        Ok(())
    }
}

/// A rejected input line (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses every non-blank line; lines that fail to decode or violate a
/// record invariant are reported instead of returned.
pub fn parse_jsonl<T: Record>(text: &str) -> Parsed<T> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<T>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.check().map(|_| r).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => records.push(r),
            Err(message) => diagnostics.push(Diagnostic { line: i + 1, message }),
        }
    }
    Parsed { records, diagnostics }
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
