//! Seeded analytic scenes: one rectangular panel articulating about a hinge
//! or sliding along a direction, optionally occluded by a drifting ellipse.
//!
//! Ground truth is exact: the GT mask is the scan conversion of the moved
//! panel. Detections are derived from ground truth and then perturbed.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, a portable
//! generator, and every frame consumes the same number of draws in a fixed
//! order regardless of which noise terms are zero:
//! drop, score, vertex jitter (x, y per vertex), normal tilt (3 for the tilt
//! axis, 1 for the angle), plane offset, axis angle, axis offset.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::clip_near;
use crate::geometry::{project_axis3d, rodrigues, ArticulationKind, Axis3D, CameraIntrinsics, Plane, ProjectedAxis, Vec2, Vec3};
use crate::raster::{mask_bbox, rasterize_rings, Box2D, Mask};
use crate::tracking::Detection;

/// Rectangular panel pose at articulation degree zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    /// Meters.
    pub width: f64,
    pub height: f64,
    /// Panel center in camera coordinates (meters).
    pub center: [f64; 3],
    /// Rotation about the camera y axis, degrees. Zero faces the camera.
    pub yaw_deg: f64,
    /// Rotation about the camera x axis, degrees.
    pub pitch_deg: f64,
}

/// Where the panel articulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    HingeLeft,
    HingeRight,
    HingeTop,
    HingeBottom,
    /// Drawer-like motion along the panel normal.
    SlideNormal,
    /// Sliding-door motion along the panel width.
    SlideWidth,
}

impl Joint {
    pub fn kind(self) -> ArticulationKind {
        match self {
            Joint::SlideNormal | Joint::SlideWidth => ArticulationKind::Translation,
            _ => ArticulationKind::Rotation,
        }
    }
}

/// `alpha(t) = intercept + slope * t` with `t = frame / fps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Radians or meters per second.
    pub slope: f64,
    pub intercept: f64,
    pub frames: u32,
    pub fps: f64,
}

/// Ellipse removed from detection masks. All quantities are fractions of the
/// image width (x) and height (y); `drift` is applied per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccluderSpec {
    pub center: [f64; 2],
    pub radii: [f64; 2],
    pub drift: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Pixels, applied independently to each projected panel vertex.
    pub mask_vertex_jitter_sigma: f64,
    /// Radians.
    pub axis_angle_sigma: f64,
    /// Pixels.
    pub axis_offset_sigma: f64,
    /// Radians of tilt about a random axis perpendicular to the normal.
    pub normal_angle_sigma: f64,
    /// Meters.
    pub offset_sigma: f64,
    pub detection_drop_prob: f64,
    /// Detection confidences are uniform on `[min, max]`.
    pub score_range: [f64; 2],
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mask_vertex_jitter_sigma: 0.0,
            axis_angle_sigma: 0.0,
            axis_offset_sigma: 0.0,
            normal_angle_sigma: 0.0,
            offset_sigma: 0.0,
            detection_drop_prob: 0.0,
            score_range: [0.9, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default)]
    pub camera: CameraIntrinsics,
    pub panel: PanelSpec,
    pub joint: Joint,
    pub motion: MotionSpec,
    #[serde(default)]
    pub occluder: Option<OccluderSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SceneConfig {
    /// A 0.9 x 2.0 m door hinged on its left edge, opening 1.5 degrees per
    /// frame at 10 fps for 30 frames.
    pub fn door() -> Self {
        Self {
            camera: CameraIntrinsics::default(),
            panel: PanelSpec { width: 0.9, height: 2.0, center: [-0.2, 0.05, 3.0], yaw_deg: 15.0, pitch_deg: 0.0 },
            joint: Joint::HingeLeft,
            motion: MotionSpec { slope: 1.5f64.to_radians() * 10.0, intercept: 0.0, frames: 30, fps: 10.0 },
            occluder: None,
            noise: NoiseSpec::default(),
        }
    }

    /// A 0.6 x 0.3 m drawer front pulled toward the camera, 1 cm per frame
    /// at 30 fps for 30 frames.
    pub fn drawer() -> Self {
        Self {
            camera: CameraIntrinsics::default(),
            panel: PanelSpec { width: 0.6, height: 0.3, center: [0.35, 0.45, 2.2], yaw_deg: -10.0, pitch_deg: 0.0 },
            joint: Joint::SlideNormal,
            motion: MotionSpec { slope: -0.01 * 30.0, intercept: 0.0, frames: 30, fps: 30.0 },
            occluder: None,
            noise: NoiseSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let p = &self.panel;
        let finite = [p.width, p.height, p.yaw_deg, p.pitch_deg].iter().chain(&p.center).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("panel"));
        }
        if p.width <= 0.0 || p.height <= 0.0 {
            return Err(Error::InvalidConfig("panel must have positive area".into()));
        }
        let m = &self.motion;
        if m.frames < 1 || !(m.fps > 0.0) || !m.slope.is_finite() || !m.intercept.is_finite() {
            return Err(Error::InvalidConfig("motion needs frames >= 1, fps > 0 and finite slope".into()));
        }
        let n = &self.noise;
        let sigmas = [
            n.mask_vertex_jitter_sigma,
            n.axis_angle_sigma,
            n.axis_offset_sigma,
            n.normal_angle_sigma,
            n.offset_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig("noise sigmas must be finite and >= 0".into()));
        }
        let [lo, hi] = n.score_range;
        if !(0.0..=1.0).contains(&n.detection_drop_prob) || !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidConfig("probabilities and score range must lie in [0, 1]".into()));
        }
        if let Some(o) = &self.occluder {
            if !o.center.iter().chain(&o.radii).chain(&o.drift).all(|v| v.is_finite()) || o.radii.iter().any(|r| *r < 0.0) {
                return Err(Error::InvalidConfig("occluder must be finite with non-negative radii".into()));
            }
        }
        Ok(())
    }

    fn pose(&self) -> Matrix3<f64> {
        let yaw = rodrigues(&Vec3::y(), self.panel.yaw_deg.to_radians());
        let pitch = rodrigues(&Vec3::x(), self.panel.pitch_deg.to_radians());
        yaw * pitch
    }

    /// Panel corners at degree zero, clockwise in the image when facing the
    /// camera: top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [Vec3; 4] {
        let r = self.pose();
        let (u, v) = (r * Vec3::x(), r * Vec3::y());
        let c = Vec3::from(self.panel.center);
        let (hw, hh) = (self.panel.width / 2.0, self.panel.height / 2.0);
        [c - u * hw - v * hh, c + u * hw - v * hh, c + u * hw + v * hh, c - u * hw + v * hh]
    }

    /// Panel plane at degree zero.
    pub fn plane(&self) -> Plane {
        let n = self.pose() * Vec3::z();
        Plane::through_point(n, &Vec3::from(self.panel.center)).expect("pose normal is unit")
    }

    /// Ground-truth axis at degree zero. Translation axes are anchored at the
    /// panel center.
    pub fn axis(&self) -> Axis3D {
        let r = self.pose();
        let (u, v, n) = (r * Vec3::x(), r * Vec3::y(), r * Vec3::z());
        let c = Vec3::from(self.panel.center);
        let (hw, hh) = (self.panel.width / 2.0, self.panel.height / 2.0);
        let axis = match self.joint {
            Joint::HingeLeft => Axis3D::rotation(c - u * hw, v),
            Joint::HingeRight => Axis3D::rotation(c + u * hw, v),
            Joint::HingeTop => Axis3D::rotation(c - v * hh, u),
            Joint::HingeBottom => Axis3D::rotation(c + v * hh, u),
            Joint::SlideNormal => Axis3D::translation(c, n),
            Joint::SlideWidth => Axis3D::translation(c, u),
        };
        axis.expect("pose axes are unit")
    }

    pub fn alpha_at(&self, frame: u32) -> f64 {
        self.motion.intercept + self.motion.slope * (frame as f64 / self.motion.fps)
    }
}

/// Exact per-frame annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame: u32,
    pub time: f64,
    pub articulating: bool,
    pub category: ArticulationKind,
    pub alpha: f64,
    pub bbox: Box2D,
    pub mask: Mask,
    /// Absent when the projected axis misses the image.
    pub axis: Option<ProjectedAxis>,
    pub axis3d: Axis3D,
    pub plane: Plane,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub ground_truth: Vec<GroundTruthFrame>,
    /// Detections per frame (zero or one each).
    pub detections: Vec<Vec<Detection>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Renders the scene and derives perturbed detections; deterministic in
/// `(config, seed)`.
pub fn generate_sequence(config: &SceneConfig, seed: u64) -> Result<SynthSequence> {
    config.validate()?;
    let k = &config.camera;
    let (w, h) = (k.width as usize, k.height as usize);
    let corners = config.corners();
    let plane0 = config.plane();
    let axis0 = config.axis();
    let kind = config.joint.kind();
    let noise = &config.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ground_truth = Vec::with_capacity(config.motion.frames as usize);
    let mut detections = Vec::with_capacity(config.motion.frames as usize);
    let mut clipped = Vec::new();

    for frame in 0..config.motion.frames {
        let time = frame as f64 / config.motion.fps;
        let alpha = config.alpha_at(frame);
        let t = axis0.transform(alpha);
        let moved: Vec<Vec3> = corners.iter().map(|c| t.apply(c)).collect();
        clip_near(&moved, 0.01, &mut clipped);
        if clipped.len() < 3 {
            return Err(Error::InvalidConfig(format!("panel is behind the camera at frame {frame}")));
        }
        let ring: Vec<Vec2> = clipped.iter().map(|p| k.project(p).expect("clipped to positive depth")).collect();
        let mask = rasterize_rings(std::slice::from_ref(&ring), w, h);
        let bbox = mask_bbox(&mask)
            .map_err(|_| Error::InvalidConfig(format!("panel leaves the image at frame {frame}")))?;
        let plane = Plane::through_point(t.rotation * plane0.normal, &moved[0]).expect("rotated normal is unit");
        let mut axis3d = axis0;
        if kind == ArticulationKind::Translation {
            axis3d.point = t.apply(&axis0.point);
        }
        let axis = project_axis3d(k, &axis3d).ok().filter(|a| {
            kind == ArticulationKind::Translation || a.clip_to_image(w as f64, h as f64).is_some()
        });

        // detection draws, always in the same order
        let dropped = rng.random::<f64>() < noise.detection_drop_prob;
        let u: f64 = rng.random();
        let score = noise.score_range[0] + (noise.score_range[1] - noise.score_range[0]) * u;
        let jittered: Vec<Vec2> = ring
            .iter()
            .map(|p| {
                let (dx, dy) = (normal(&mut rng), normal(&mut rng));
                p + Vec2::new(dx, dy) * noise.mask_vertex_jitter_sigma
            })
            .collect();
        let g = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng));
        let tilt = normal(&mut rng) * noise.normal_angle_sigma;
        let d_offset = normal(&mut rng) * noise.offset_sigma;
        let d_theta = normal(&mut rng) * noise.axis_angle_sigma;
        let d_p = normal(&mut rng) * noise.axis_offset_sigma;

        let mut det_mask = rasterize_rings(&[jittered], w, h);
        if let Some(occ) = &config.occluder {
            carve_ellipse(&mut det_mask, occ, frame);
        }
        if !dropped && !det_mask.is_empty() {
            let mut perp = g - plane.normal * g.dot(&plane.normal);
            if perp.norm() < 1e-9 {
                perp = plane.normal.cross(&Vec3::x());
            }
            let n = rodrigues(&perp.normalize(), tilt) * plane.normal;
            let det_plane = Plane::new(n, plane.offset + d_offset)?;
            let det_axis = match axis {
                Some(a) if kind == ArticulationKind::Rotation => Some(ProjectedAxis::new(a.theta + d_theta, a.p + d_p)?),
                Some(a) => Some(ProjectedAxis::new(a.theta + d_theta, 0.0)?),
                None => None,
            };
            detections.push(vec![Detection {
                frame,
                time,
                bbox: mask_bbox(&det_mask)?,
                mask: det_mask,
                category: kind,
                score,
                plane: det_plane,
                axis: det_axis,
            }]);
        } else {
            detections.push(Vec::new());
        }
        ground_truth.push(GroundTruthFrame {
            frame,
            time,
            articulating: config.motion.slope != 0.0,
            category: kind,
            alpha,
            bbox,
            mask,
            axis,
            axis3d,
            plane,
        });
    }
    Ok(SynthSequence { ground_truth, detections })
}

/// The same scene held still: zero slope, GT not articulating. The occluder,
/// if any, keeps drifting.
pub fn make_static_negative(config: &SceneConfig, seed: u64) -> Result<SynthSequence> {
    let mut still = config.clone();
    still.motion.slope = 0.0;
    generate_sequence(&still, seed)
}

fn carve_ellipse(mask: &mut Mask, occ: &OccluderSpec, frame: u32) {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let cx = (occ.center[0] + occ.drift[0] * frame as f64) * w;
    let cy = (occ.center[1] + occ.drift[1] * frame as f64) * h;
    let (rx, ry) = (occ.radii[0] * w, occ.radii[1] * h);
    if rx <= 0.0 || ry <= 0.0 {
        return;
    }
    let y0 = (cy - ry).floor().max(0.0) as usize;
    let y1 = ((cy + ry).ceil().max(0.0) as usize).min(mask.height());
    let x0 = (cx - rx).floor().max(0.0) as usize;
    let x1 = ((cx + rx).ceil().max(0.0) as usize).min(mask.width());
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
            if dx * dx + dy * dy <= 1.0 {
                mask.set(x, y, false);
            }
        }
    }
}
