//! Run configuration, read from TOML.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalThresholds;
use crate::fitting::FitConfig;
use crate::geometry::CameraIntrinsics;
use crate::tracking::AssociationMetric;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub iou_threshold: f64,
    pub metric: AssociationMetric,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, metric: AssociationMetric::Mask }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when neither `--out` nor the environment names a directory.
    pub dir: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tracking: TrackingConfig,
    pub fitting: FitConfig,
    pub eval: EvalThresholds,
    pub output: OutputConfig,
    /// Overrides the intrinsics; otherwise ScanNet defaults scaled to the
    /// mask size are used.
    pub camera: Option<CameraIntrinsics>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tracking.iou_threshold) {
            return Err(Error::InvalidConfig("tracking.iou_threshold outside [0, 1]".into()));
        }
        self.fitting.validate()?;
        self.eval.validate()?;
        if let Some(k) = &self.camera {
            k.validate()?;
        }
        Ok(())
    }

    /// Every setting as TOML, defaults included.
    pub fn dump(&self) -> String {
        let mut out = toml::to_string_pretty(self).expect("config serializes");
        if self.camera.is_none() {
            out.push_str("\n# [camera] is unset: ScanNet intrinsics scaled to the mask size\n");
            out.push_str("# fx = 577.87, fy = 577.87, cx = 319.5, cy = 239.5 at 640x480\n");
        }
        out
    }

    /// Explicit camera, or the scaled ScanNet intrinsics for a mask size.
    pub fn camera_for(&self, width: u32, height: u32) -> CameraIntrinsics {
        match self.camera {
            Some(k) => k,
            None => CameraIntrinsics::scannet(width, height),
        }
    }
}
