//! Planar articulation from per-frame detections.
//!
//! Per-frame detections of articulated planes (mask, plane, projected axis)
//! are linked into tracks, lifted to a 3D plane segment and axis, and
//! explained by a single articulation whose per-frame degree is found by
//! grid search over reprojection IoU. A linear motion fit then decides
//! whether the track articulates. A seeded analytic scene generator provides
//! exact ground truth, and the evaluation module scores predictions with
//! AUROC and AP.

pub mod config;
pub mod error;
pub mod eval;
pub mod fitting;
pub mod geometry;
pub mod par;
pub mod raster;
pub mod schema;
pub mod synth;
pub mod tracking;

pub use error::{Error, Result};
pub use geometry::{ArticulationKind, Axis3D, CameraIntrinsics, Plane, ProjectedAxis, RigidTransform, Vec2, Vec3};
pub use par::Exec;
pub use raster::{Box2D, Mask, Polygon2D};
