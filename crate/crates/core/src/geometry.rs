//! Pinhole camera model, plane and axis parameterizations, 2D/3D lifting and
//! rigid motions about an articulation axis.
//!
//! Camera frame: +z forward, +x right, +y down. Pixel coordinates are
//! continuous with the origin at the top-left image corner, so pixel `(i, j)`
//! covers `[i, i+1) x [j, j+1)`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Threshold below which a ray is treated as parallel to a plane.
pub const PARALLEL_EPS: f64 = 1e-9;

/// Tolerance accepted when checking that a vector has unit length.
pub const UNIT_TOL: f64 = 1e-6;

/// Whether a part rotates about a hinge or slides along a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArticulationKind {
    Rotation,
    Translation,
}

impl ArticulationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArticulationKind::Rotation => "rotation",
            ArticulationKind::Translation => "translation",
        }
    }
}

/// Pinhole intrinsics. Widths and heights are in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// ScanNet's published color-camera defaults at 640x480.
const SCANNET_F: f64 = 577.87;
const SCANNET_CX: f64 = 319.5;
const SCANNET_CY: f64 = 239.5;

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// The assumed camera used when inputs carry no calibration, scaled
    /// proportionally from its native 640x480 to the given image size.
    pub fn scannet(width: u32, height: u32) -> Self {
        let sx = width as f64 / 640.0;
        let sy = height as f64 / 480.0;
        Self {
            fx: SCANNET_F * sx,
            fy: SCANNET_F * sy,
            cx: SCANNET_CX * sx,
            cy: SCANNET_CY * sy,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("camera intrinsics"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidConfig("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    /// Unnormalized viewing ray `K^-1 [u, v, 1]`.
    pub fn ray(&self, pixel: Vec2) -> Vec3 {
        Vec3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point. Fails for depths at or below 1e-9.
    pub fn project(&self, p: &Vec3) -> Result<Vec2> {
        if !(p.z > 1e-9) {
            return Err(Error::BehindCamera);
        }
        Ok(Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::scannet(640, 480)
    }
}

/// Plane `n . x = o` with unit normal `n`. Canonical planes have `o >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Builds a canonical plane, rescaling a non-unit normal.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        if !normal.iter().all(|v| v.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("plane"));
        }
        let len = normal.norm();
        if len < 1e-12 {
            return Err(Error::Degenerate("zero plane normal"));
        }
        Ok(Self { normal: normal / len, offset: offset / len }.canonical())
    }

    pub fn through_point(normal: Vec3, point: &Vec3) -> Result<Self> {
        Self::new(normal, normal.dot(point))
    }

    /// Flips the normal so that the offset is non-negative. Planes through the
    /// camera center keep a sign fixed by [`canonical_direction`].
    pub fn canonical(self) -> Self {
        if self.offset < 0.0 {
            Self { normal: -self.normal, offset: -self.offset }
        } else if self.offset == 0.0 {
            Self { normal: canonical_direction(self.normal), offset: 0.0 }
        } else {
            self
        }
    }

    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

/// Flips `d` so its largest-magnitude component is positive (first wins ties).
pub fn canonical_direction(d: Vec3) -> Vec3 {
    let mut best = 0;
    for i in 1..3 {
        if d[i].abs() > d[best].abs() {
            best = i;
        }
    }
    if d[best] < 0.0 {
        -d
    } else {
        d
    }
}

/// Image line `x cos(theta) + y sin(theta) = p` with `theta` in `[0, pi)`.
///
/// `p` is signed: restricting the normal angle to a half turn leaves the sign
/// of the distance to select the side of the origin. Translation axes carry
/// `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedAxis {
    pub theta: f64,
    pub p: f64,
}

impl ProjectedAxis {
    /// Canonicalizes an arbitrary `(theta, p)` pair describing the same line.
    pub fn new(theta: f64, p: f64) -> Result<Self> {
        if !theta.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite("projected axis"));
        }
        let mut t = theta.rem_euclid(TAU);
        let mut p = p;
        if t >= PI {
            t -= PI;
            p = -p;
        }
        if t >= PI {
            t = 0.0;
        }
        // avoid -0.0 leaking into serialized output
        Ok(Self { theta: t, p: p + 0.0 })
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Unit direction along the line.
    pub fn direction(&self) -> Vec2 {
        Vec2::new(-self.theta.sin(), self.theta.cos())
    }

    /// Foot of the perpendicular from the origin.
    pub fn foot(&self) -> Vec2 {
        self.normal() * self.p
    }

    /// Signed distance from `q` to the line.
    pub fn residual(&self, q: &Vec2) -> f64 {
        self.normal().dot(q) - self.p
    }

    /// The part of the line inside `[0, width] x [0, height]`, or `None` when
    /// the line misses the image or only touches it at a point.
    pub fn clip_to_image(&self, width: f64, height: f64) -> Option<(Vec2, Vec2)> {
        clip_line(self.foot(), self.direction(), width, height)
    }
}

/// Liang-Barsky clip of the infinite line `origin + s * dir` to the image box.
pub(crate) fn clip_line(origin: Vec2, dir: Vec2, width: f64, height: f64) -> Option<(Vec2, Vec2)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (o, d, max) in [(origin.x, dir.x, width), (origin.y, dir.y, height)] {
        if d.abs() < 1e-15 {
            if o < 0.0 || o > max {
                return None;
            }
        } else {
            let a = (0.0 - o) / d;
            let b = (max - o) / d;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    if hi - lo <= 1e-9 {
        return None;
    }
    Some((origin + dir * lo, origin + dir * hi))
}

/// Angle-doubling encoding of a 180-degree-ambiguous line angle.
pub fn encode_axis_angle(theta: f64) -> Result<[f64; 2]> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("axis angle"));
    }
    Ok([(2.0 * theta).sin(), (2.0 * theta).cos()])
}

/// Inverse of [`encode_axis_angle`], returning an angle in `[0, pi)`.
pub fn decode_axis_angle(v: [f64; 2]) -> Result<f64> {
    if !v[0].is_finite() || !v[1].is_finite() {
        return Err(Error::NonFinite("encoded axis angle"));
    }
    if v[0].hypot(v[1]) <= 1e-9 {
        return Err(Error::Degenerate("encoded axis angle has near-zero norm"));
    }
    let t = 0.5 * v[0].atan2(v[1]).rem_euclid(TAU);
    Ok(if t >= PI { t - PI } else { t })
}

/// Normal-form line through two image points.
pub fn axis_from_endpoints(p1: Vec2, p2: Vec2) -> Result<ProjectedAxis> {
    let d = p2 - p1;
    let len = d.norm();
    if !len.is_finite() {
        return Err(Error::NonFinite("axis endpoints"));
    }
    if len <= 1e-6 {
        return Err(Error::Degenerate("coincident axis endpoints"));
    }
    let n = Vec2::new(-d.y, d.x) / len;
    ProjectedAxis::new(n.y.atan2(n.x), n.dot(&p1))
}

/// Intersects the viewing ray through `pixel` with `plane`.
pub fn backproject_to_plane(k: &CameraIntrinsics, pixel: Vec2, plane: &Plane) -> Result<Vec3> {
    let r = k.ray(pixel).normalize();
    let denom = plane.normal.dot(&r);
    if denom.abs() <= PARALLEL_EPS {
        return Err(Error::ParallelRay);
    }
    let s = plane.offset / denom;
    if s <= 0.0 {
        return Err(Error::BehindCamera);
    }
    Ok(r * s)
}

/// Normal of the plane through the camera center that projects onto `axis`.
fn backprojection_plane_normal(k: &CameraIntrinsics, axis: &ProjectedAxis) -> Vec3 {
    let (c, s) = (axis.theta.cos(), axis.theta.sin());
    Vec3::new(k.fx * c, k.fy * s, k.cx * c + k.cy * s - axis.p)
}

/// A 3D articulation axis: a hinge line for rotations, a direction for
/// translations (where `point` only anchors the axis for display).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis3D {
    pub kind: ArticulationKind,
    pub point: Vec3,
    pub direction: Vec3,
}

impl Axis3D {
    pub fn rotation(point: Vec3, direction: Vec3) -> Result<Self> {
        Self::with_kind(ArticulationKind::Rotation, point, direction)
    }

    pub fn translation(point: Vec3, direction: Vec3) -> Result<Self> {
        Self::with_kind(ArticulationKind::Translation, point, direction)
    }

    fn with_kind(kind: ArticulationKind, point: Vec3, direction: Vec3) -> Result<Self> {
        let len = direction.norm();
        if !len.is_finite() || !point.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("axis"));
        }
        if len < 1e-12 {
            return Err(Error::Degenerate("zero axis direction"));
        }
        Ok(Self { kind, point, direction: direction / len })
    }

    /// The rigid motion taking the reference pose to articulation degree
    /// `alpha` (radians for rotations, meters for translations).
    pub fn transform(&self, alpha: f64) -> RigidTransform {
        match self.kind {
            ArticulationKind::Rotation => rotation_transform(self, alpha),
            ArticulationKind::Translation => translation_transform(&self.direction, alpha),
        }
    }

    /// Distance from `x` to this axis viewed as an infinite line.
    pub fn distance_to_point(&self, x: &Vec3) -> f64 {
        let v = x - self.point;
        (v - self.direction * v.dot(&self.direction)).norm()
    }
}

/// Lifts an image hinge line onto the object plane.
pub fn lift_rotation_axis(k: &CameraIntrinsics, axis: &ProjectedAxis, plane: &Plane) -> Result<Axis3D> {
    let m = backprojection_plane_normal(k, axis);
    let n = plane.normal;
    let cross = m.cross(&n);
    if cross.norm() <= PARALLEL_EPS * m.norm() {
        return Err(Error::Degenerate("back-projection plane is parallel to the object plane"));
    }
    let (mm, mn, nn) = (m.dot(&m), m.dot(&n), n.dot(&n));
    let den = mm * nn - mn * mn;
    // closest point to the camera on both planes
    let point = (n * mm - m * mn) * (plane.offset / den);
    Axis3D::rotation(point, canonical_direction(cross.normalize()))
}

/// Candidate 3D translation directions for an image direction observed at
/// `anchor`: the in-plane direction along the image line through `anchor`,
/// then the plane normal.
pub fn lift_translation_axis(
    k: &CameraIntrinsics,
    axis: &ProjectedAxis,
    plane: &Plane,
    anchor: Vec2,
) -> Result<[Vec3; 2]> {
    let a = backproject_to_plane(k, anchor, plane)?;
    let step = axis.direction() * 10.0;
    let b = backproject_to_plane(k, anchor + step, plane)
        .or_else(|_| backproject_to_plane(k, anchor - step, plane))?;
    let d = b - a;
    if d.norm() < 1e-12 {
        return Err(Error::Degenerate("translation direction collapses on the plane"));
    }
    Ok([canonical_direction(d.normalize()), plane.normal])
}

/// Rodrigues rotation matrix for a unit `axis` and angle in radians.
pub fn rodrigues(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }
}

/// Rotation by `alpha` radians about a hinge line.
pub fn rotation_transform(axis: &Axis3D, alpha: f64) -> RigidTransform {
    let r = rodrigues(&axis.direction, alpha);
    RigidTransform { rotation: r, translation: axis.point - r * axis.point }
}

/// Translation by `alpha` meters along a unit direction.
pub fn translation_transform(direction: &Vec3, alpha: f64) -> RigidTransform {
    RigidTransform { rotation: Matrix3::identity(), translation: direction * alpha }
}

/// Projects each point; points at non-positive depth come back as `None`.
pub fn project_points(k: &CameraIntrinsics, points: &[Vec3]) -> Vec<Option<Vec2>> {
    points.iter().map(|p| k.project(p).ok()).collect()
}

/// Image of a 3D axis. Translation axes project to the image direction of
/// motion at `point`, with `p = 0`.
pub fn project_axis3d(k: &CameraIntrinsics, axis: &Axis3D) -> Result<ProjectedAxis> {
    let (q, d) = (axis.point, axis.direction);
    match axis.kind {
        ArticulationKind::Rotation => {
            if d.z.abs() < 1e-12 && q.z <= 1e-9 {
                return Err(Error::BehindCamera);
            }
            let m = q.cross(&d);
            if m.norm() < 1e-12 {
                return Err(Error::Degenerate("axis passes through the camera center"));
            }
            let a = m.x / k.fx;
            let b = m.y / k.fy;
            let c = m.z - m.x * k.cx / k.fx - m.y * k.cy / k.fy;
            let norm = a.hypot(b);
            if norm < 1e-12 {
                return Err(Error::Degenerate("axis projects to the line at infinity"));
            }
            ProjectedAxis::new(b.atan2(a), -c / norm)
        }
        ArticulationKind::Translation => {
            if q.z <= 1e-9 {
                return Err(Error::BehindCamera);
            }
            let z2 = q.z * q.z;
            let du = k.fx * (d.x * q.z - q.x * d.z) / z2;
            let dv = k.fy * (d.y * q.z - q.y * d.z) / z2;
            if du.hypot(dv) < 1e-12 {
                return Err(Error::Degenerate("translation points along the viewing ray"));
            }
            ProjectedAxis::new(du.atan2(-dv), 0.0)
        }
    }
}

/// Acute angle in radians between two lines with the given normal angles.
pub fn acute_line_angle(theta_a: f64, theta_b: f64) -> f64 {
    let d = (theta_a - theta_b).rem_euclid(PI);
    d.min(PI - d).min(FRAC_PI_2)
}
