//! Temporal articulation fitting.
//!
//! A reference detection is lifted to a 3D plane segment and axis. For every
//! frame of the track, the articulation degree that best explains the
//! observed mask is found by grid search over the reprojection IoU
//!
//! ```text
//! r(alpha, t) = IoU(M_t, project(K, T_alpha(segment)))
//! ```
//!
//! and the per-frame degrees are fit with a line `alpha = k t + b`. A track
//! articulates when that line explains the degrees (R^2), moves fast enough
//! (|k|) and at least one frame is explained well (score floor).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    backproject_to_plane, lift_rotation_axis, lift_translation_axis, project_axis3d, ArticulationKind, Axis3D,
    CameraIntrinsics, Plane, ProjectedAxis, RigidTransform, Vec2, Vec3,
};
use crate::par::Exec;
use crate::raster::{mask_to_boundary_polygons, polygon_spans, Mask, MaskIndex, Span};
use crate::tracking::Track;

/// Uniform grid of articulation degrees: every integer multiple of `step`
/// inside `[min, max]`, so zero is always a candidate when the range spans it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridSpec {
    /// +-150 degrees in 1 degree steps (radians).
    pub fn rotation_default() -> Self {
        Self { min: -2.618, max: 2.618, step: 1f64.to_radians() }
    }

    /// +-1 m in 1 cm steps.
    pub fn translation_default() -> Self {
        Self { min: -1.0, max: 1.0, step: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::NonFinite("grid"));
        }
        if self.step <= 0.0 || self.min > self.max {
            return Err(Error::InvalidConfig("grid needs step > 0 and min <= max".into()));
        }
        if (self.max - self.min) / self.step > 1e6 {
            return Err(Error::InvalidConfig("grid has more than a million points".into()));
        }
        if self.values().is_empty() {
            return Err(Error::InvalidConfig("grid contains no multiple of its step".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let lo = (self.min / self.step - 1e-9).ceil() as i64;
        let hi = (self.max / self.step + 1e-9).floor() as i64;
        (lo..=hi).map(|i| i as f64 * self.step).collect()
    }
}

/// Decision thresholds for calling a fitted track articulating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyThresholds {
    /// Minimum R^2 of the linear motion fit (inclusive).
    pub r2_min: f64,
    /// Minimum |slope| in radians or meters per second (exclusive).
    pub slope_min: f64,
    /// At least one frame must reach this reprojection IoU.
    pub score_floor: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self { r2_min: 0.4, slope_min: 0.1, score_floor: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub rotation_grid: GridSpec,
    pub translation_grid: GridSpec,
    pub thresholds: ClassifyThresholds,
    pub min_track_length: usize,
    /// Douglas-Peucker tolerance (pixels) for the reference mask outline.
    pub simplify_tol: f64,
    /// Segment geometry is clipped to `z >= near_plane` (meters).
    pub near_plane: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rotation_grid: GridSpec::rotation_default(),
            translation_grid: GridSpec::translation_default(),
            thresholds: ClassifyThresholds::default(),
            min_track_length: 5,
            simplify_tol: 1.0,
            near_plane: 0.01,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.rotation_grid.validate()?;
        self.translation_grid.validate()?;
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.r2_min) || !(0.0..=1.0).contains(&t.score_floor) || !(t.slope_min >= 0.0) {
            return Err(Error::InvalidConfig("classification thresholds out of range".into()));
        }
        if self.min_track_length < 2 {
            return Err(Error::InvalidConfig("min_track_length must be at least 2".into()));
        }
        if !(self.simplify_tol >= 0.0) || !(self.near_plane > 0.0) {
            return Err(Error::InvalidConfig("simplify_tol must be >= 0 and near_plane > 0".into()));
        }
        Ok(())
    }

    pub fn grid(&self, kind: ArticulationKind) -> &GridSpec {
        match kind {
            ArticulationKind::Rotation => &self.rotation_grid,
            ArticulationKind::Translation => &self.translation_grid,
        }
    }
}

/// A 3D plane segment and axis lifted from one reference detection.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulationHypothesis {
    pub reference_frame: u32,
    pub plane: Plane,
    pub plane_segment: Vec<Vec<Vec3>>,
    pub axis: Axis3D,
    pub category: ArticulationKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFit {
    pub frame: u32,
    pub time: f64,
    pub alpha: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticulationFit {
    pub hypothesis: ArticulationHypothesis,
    pub frame_fits: Vec<FrameFit>,
    pub motion: MotionModel,
    pub articulating: bool,
    pub mean_score: f64,
}

/// Sutherland-Hodgman clip of a 3D ring against `z >= near`.
pub fn clip_near(ring: &[Vec3], near: f64, out: &mut Vec<Vec3>) {
    out.clear();
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let (ina, inb) = (a.z >= near, b.z >= near);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let s = (near - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * s;
            p.z = near;
            out.push(p);
        }
    }
}

/// Reusable buffers for scoring many transforms against one mask.
#[derive(Debug, Default)]
pub struct Scratch {
    moved: Vec<Vec3>,
    clipped: Vec<Vec3>,
    rings: Vec<Vec<Vec2>>,
    spans: Vec<Span>,
}

/// Projects the transformed segment and scan-converts it into `scratch.spans`.
fn project_segment(
    k: &CameraIntrinsics,
    transform: &RigidTransform,
    segment: &[Vec<Vec3>],
    near: f64,
    scratch: &mut Scratch,
) {
    let Scratch { moved, clipped, rings, spans } = scratch;
    let mut used = 0;
    for poly in segment {
        moved.clear();
        moved.extend(poly.iter().map(|v| transform.apply(v)));
        clip_near(moved, near, clipped);
        if clipped.len() < 3 {
            continue;
        }
        if rings.len() <= used {
            rings.push(Vec::new());
        }
        let ring = &mut rings[used];
        ring.clear();
        ring.extend(clipped.iter().map(|p| {
            Vec2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
        }));
        used += 1;
    }
    polygon_spans(&rings[..used], k.width as usize, k.height as usize, spans);
}

fn score_with(index: &MaskIndex, k: &CameraIntrinsics, t: &RigidTransform, seg: &[Vec<Vec3>], near: f64, s: &mut Scratch) -> f64 {
    project_segment(k, t, seg, near, s);
    index.iou_with_spans(&s.spans)
}

/// IoU between `mask` and the segment moved by `transform`, projected with
/// `k` after near-plane clipping at 0.01 m. Geometry entirely behind the near
/// plane scores 0.
pub fn reprojection_score(
    mask: &Mask,
    k: &CameraIntrinsics,
    transform: &RigidTransform,
    segment: &[Vec<Vec3>],
) -> Result<f64> {
    check_dims(mask, k)?;
    let index = MaskIndex::new(mask);
    Ok(score_with(&index, k, transform, segment, 0.01, &mut Scratch::default()))
}

fn check_dims(mask: &Mask, k: &CameraIntrinsics) -> Result<()> {
    if mask.width() != k.width as usize || mask.height() != k.height as usize {
        return Err(Error::DimensionMismatch(mask.width(), mask.height(), k.width as usize, k.height as usize));
    }
    Ok(())
}

/// True when `(score, alpha)` should replace the incumbent best.
fn better(score: f64, alpha: f64, best_score: f64, best_alpha: f64) -> bool {
    if score != best_score {
        return score > best_score;
    }
    let (a, b) = (alpha.abs(), best_alpha.abs());
    a < b || (a == b && alpha < best_alpha)
}

/// Grid argmax of the reprojection score, ties toward smaller |alpha|.
pub fn fit_frame_alpha(
    index: &MaskIndex,
    k: &CameraIntrinsics,
    hypothesis: &ArticulationHypothesis,
    grid: &[f64],
    near: f64,
    scratch: &mut Scratch,
) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for &alpha in grid {
        let t = hypothesis.axis.transform(alpha);
        let s = score_with(index, k, &t, &hypothesis.plane_segment, near, scratch);
        if better(s, alpha, best.0, best.1) {
            best = (s, alpha);
        }
    }
    (best.1, best.0.max(0.0))
}

/// Least-squares line `alpha = slope * t + intercept`. R^2 is 0 by
/// convention when alpha is constant (total sum of squares below 1e-12).
pub fn fit_motion_model(alphas: &[f64], times: &[f64]) -> Result<MotionModel> {
    if alphas.len() != times.len() {
        return Err(Error::InvalidRecord("alphas and times differ in length".into()));
    }
    let n = alphas.len();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonIncreasingTimes);
    }
    let nf = n as f64;
    let t_mean = times.iter().sum::<f64>() / nf;
    let a_mean = alphas.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut ss_tot) = (0.0, 0.0, 0.0);
    for (t, a) in times.iter().zip(alphas) {
        let (dt, da) = (t - t_mean, a - a_mean);
        sxx += dt * dt;
        sxy += dt * da;
        ss_tot += da * da;
    }
    let slope = sxy / sxx;
    let intercept = a_mean - slope * t_mean;
    let r_squared = if ss_tot < 1e-12 {
        0.0
    } else {
        let ss_res: f64 = times
            .iter()
            .zip(alphas)
            .map(|(t, a)| {
                let r = a - (slope * t + intercept);
                r * r
            })
            .sum();
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(MotionModel { slope, intercept, r_squared })
}

/// `R^2 >= r2_min`, `|k| > slope_min`, and not every frame below the floor.
pub fn classify_articulation(frame_fits: &[FrameFit], motion: &MotionModel, th: &ClassifyThresholds) -> bool {
    motion.r_squared >= th.r2_min
        && motion.slope.abs() > th.slope_min
        && frame_fits.iter().any(|f| f.score >= th.score_floor)
}

/// Lifts the outline of `mask` onto `plane`. Vertices whose rays miss the
/// plane are dropped; rings left with fewer than three vertices are skipped.
pub fn lift_segment(k: &CameraIntrinsics, mask: &Mask, plane: &Plane, simplify_tol: f64) -> Result<Vec<Vec<Vec3>>> {
    let polys = mask_to_boundary_polygons(mask, simplify_tol)?;
    Ok(polys
        .iter()
        .map(|p| p.vertices.iter().filter_map(|v| backproject_to_plane(k, *v, plane).ok()).collect::<Vec<_>>())
        .filter(|ring| ring.len() >= 3)
        .collect())
}

/// Track positions used as references: first, middle and last.
pub fn reference_positions(len: usize) -> Vec<usize> {
    let mut v = vec![0, len / 2, len.saturating_sub(1)];
    v.dedup();
    v.retain(|&i| i < len);
    v
}

/// Every hypothesis that lifts cleanly from the reference detections. A
/// translation track yields one hypothesis per direction candidate.
pub fn build_hypotheses(track: &Track, k: &CameraIntrinsics, cfg: &FitConfig) -> Vec<ArticulationHypothesis> {
    let mut out = Vec::new();
    for pos in reference_positions(track.len()) {
        let det = &track.detections[pos];
        let Ok(segment) = lift_segment(k, &det.mask, &det.plane, cfg.simplify_tol) else { continue };
        if segment.is_empty() {
            continue;
        }
        let mut axes = Vec::new();
        match track.category {
            ArticulationKind::Rotation => {
                if let Some(a) = det.axis.and_then(|a| lift_rotation_axis(k, &a, &det.plane).ok()) {
                    axes.push(a);
                }
            }
            ArticulationKind::Translation => {
                let Some(anchor) = det.mask.centroid() else { continue };
                let Ok(point) = backproject_to_plane(k, anchor, &det.plane) else { continue };
                let dirs = match det.axis.map(|a| lift_translation_axis(k, &a, &det.plane, anchor)) {
                    Some(Ok(pair)) => pair.to_vec(),
                    _ => vec![det.plane.normal],
                };
                axes.extend(dirs.into_iter().filter_map(|d| Axis3D::translation(point, d).ok()));
            }
        }
        for axis in axes {
            out.push(ArticulationHypothesis {
                reference_frame: det.frame,
                plane: det.plane,
                plane_segment: segment.clone(),
                axis,
                category: track.category,
            });
        }
    }
    out
}

/// Fits one track: scores every hypothesis on every frame and keeps the one
/// with the highest mean reprojection score (earliest wins ties).
pub fn fit_track(track: &Track, k: &CameraIntrinsics, cfg: &FitConfig, exec: Exec) -> Result<ArticulationFit> {
    if track.len() < cfg.min_track_length {
        return Err(Error::TrackTooShort { len: track.len(), min: cfg.min_track_length });
    }
    for d in &track.detections {
        check_dims(&d.mask, k)?;
    }
    let hypotheses = build_hypotheses(track, k, cfg);
    if hypotheses.is_empty() {
        return Err(Error::NoValidHypothesis);
    }
    let grid = cfg.grid(track.category).values();
    let indices: Vec<MaskIndex> = exec.map(&track.detections, |d| MaskIndex::new(&d.mask));
    let n = track.len();
    let cells = exec.map_range(hypotheses.len() * n, |c| {
        let (h, f) = (c / n, c % n);
        fit_frame_alpha(&indices[f], k, &hypotheses[h], &grid, cfg.near_plane, &mut Scratch::default())
    });

    let mut best: Option<(f64, usize)> = None;
    for h in 0..hypotheses.len() {
        let mean = cells[h * n..(h + 1) * n].iter().map(|c| c.1).sum::<f64>() / n as f64;
        if best.is_none_or(|(m, _)| mean > m) {
            best = Some((mean, h));
        }
    }
    let (mean_score, h) = best.expect("at least one hypothesis");
    let frame_fits: Vec<FrameFit> = track
        .detections
        .iter()
        .zip(&cells[h * n..(h + 1) * n])
        .map(|(d, &(alpha, score))| FrameFit { frame: d.frame, time: d.time, alpha, score })
        .collect();
    let alphas: Vec<f64> = frame_fits.iter().map(|f| f.alpha).collect();
    let times: Vec<f64> = frame_fits.iter().map(|f| f.time).collect();
    let motion = fit_motion_model(&alphas, &times)?;
    let articulating = classify_articulation(&frame_fits, &motion, &cfg.thresholds);
    Ok(ArticulationFit {
        hypothesis: hypotheses.into_iter().nth(h).expect("index in range"),
        frame_fits,
        motion,
        articulating,
        mean_score,
    })
}

impl ArticulationFit {
    /// The reference plane carried to frame `i`'s fitted degree.
    pub fn frame_plane(&self, i: usize) -> Plane {
        let hyp = &self.hypothesis;
        let t = hyp.axis.transform(self.frame_fits[i].alpha);
        let n = t.rotation * hyp.plane.normal;
        let on_plane = t.apply(&(hyp.plane.normal * hyp.plane.offset));
        Plane::through_point(n, &on_plane).unwrap_or(hyp.plane)
    }

    /// The fitted axis as seen in frame `i`. Hinges stay put; translation
    /// axes ride along with the part.
    pub fn frame_axis(&self, k: &CameraIntrinsics, i: usize) -> Option<ProjectedAxis> {
        let mut axis = self.hypothesis.axis;
        if axis.kind == ArticulationKind::Translation {
            axis.point += axis.direction * self.frame_fits[i].alpha;
        }
        project_axis3d(k, &axis).ok()
    }
}
