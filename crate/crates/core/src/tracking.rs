//! Greedy frame-to-frame association of detections into tracks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArticulationKind, Plane, ProjectedAxis};
use crate::raster::{bbox_iou, mask_bbox, mask_iou, Box2D, Mask};

/// One frame's observation of an articulated plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub time: f64,
    pub bbox: Box2D,
    pub mask: Mask,
    pub category: ArticulationKind,
    pub score: f64,
    pub plane: Plane,
    pub axis: Option<ProjectedAxis>,
}

impl Detection {
    /// Checks score range, mask occupancy and box/mask agreement (2 px).
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidRecord(format!("score {} outside [0, 1]", self.score)));
        }
        if !self.time.is_finite() {
            return Err(Error::NonFinite("detection time"));
        }
        let tight = mask_bbox(&self.mask).map_err(|_| Error::InvalidRecord("detection mask is empty".into()))?;
        let off = [
            tight.x_min - self.bbox.x_min,
            tight.y_min - self.bbox.y_min,
            tight.x_max - self.bbox.x_max,
            tight.y_max - self.bbox.y_max,
        ];
        if off.iter().any(|d| d.abs() > 2.0) {
            return Err(Error::InvalidRecord("box disagrees with mask extent by more than 2 px".into()));
        }
        if (self.plane.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnit(self.plane.normal.norm()));
        }
        Ok(())
    }
}

/// IoU flavor used to link detections across frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationMetric {
    #[default]
    Mask,
    Box,
}

impl AssociationMetric {
    fn iou(self, a: &Detection, b: &Detection) -> f64 {
        match self {
            AssociationMetric::Mask => mask_iou(&a.mask, &b.mask).unwrap_or(0.0),
            AssociationMetric::Box => bbox_iou(&a.bbox, &b.bbox),
        }
    }
}

/// A chain of detections in consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    pub category: ArticulationKind,
    pub detections: Vec<Detection>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// Score-weighted majority category; rotation wins exact ties.
pub fn majority_category(dets: &[Detection]) -> ArticulationKind {
    let (mut rot, mut trans) = (0.0, 0.0);
    for d in dets {
        match d.category {
            ArticulationKind::Rotation => rot += d.score,
            ArticulationKind::Translation => trans += d.score,
        }
    }
    if trans > rot {
        ArticulationKind::Translation
    } else {
        ArticulationKind::Rotation
    }
}

/// Buckets detections by frame index, filling gaps with empty frames so that
/// list adjacency equals frame adjacency.
pub fn group_by_frame(mut dets: Vec<Detection>) -> Vec<Vec<Detection>> {
    dets.sort_by_key(|d| d.frame);
    let (Some(first), Some(last)) = (dets.first().map(|d| d.frame), dets.last().map(|d| d.frame)) else {
        return Vec::new();
    };
    let mut frames: Vec<Vec<Detection>> = (first..=last).map(|_| Vec::new()).collect();
    for d in dets {
        frames[(d.frame - first) as usize].push(d);
    }
    frames
}

/// Greedy linking between consecutive frames.
///
/// Detections at `t` claim their argmax-IoU partner at `t + 1` in order of
/// descending score (lower index first on equal scores). A link is made only
/// when the IoU reaches `iou_threshold` and the partner is still unclaimed;
/// anything left over starts a new track. IoU ties go to the lower index.
pub fn greedy_track(frames: Vec<Vec<Detection>>, iou_threshold: f64, metric: AssociationMetric) -> Vec<Track> {
    let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut owner: Vec<Vec<Option<usize>>> = frames.iter().map(|f| vec![None; f.len()]).collect();
    for t in 0..frames.len() {
        for i in 0..frames[t].len() {
            if owner[t][i].is_none() {
                owner[t][i] = Some(members.len());
                members.push(vec![(t, i)]);
            }
        }
        let Some(next) = frames.get(t + 1) else { break };
        if next.is_empty() {
            continue;
        }
        let cur = &frames[t];
        let mut order: Vec<usize> = (0..cur.len()).collect();
        order.sort_by(|&a, &b| cur[b].score.total_cmp(&cur[a].score).then(a.cmp(&b)));
        let mut claimed = vec![false; next.len()];
        for i in order {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (j, cand) in next.iter().enumerate() {
                let iou = metric.iou(&cur[i], cand);
                if iou > best.0 {
                    best = (iou, j);
                }
            }
            let (iou, j) = best;
            if iou >= iou_threshold && !claimed[j] {
                claimed[j] = true;
                let track = owner[t][i].expect("frame t detections are owned");
                owner[t + 1][j] = Some(track);
                members[track].push((t + 1, j));
            }
        }
    }

    let mut slots: Vec<Vec<Option<Detection>>> =
        frames.into_iter().map(|f| f.into_iter().map(Some).collect()).collect();
    members
        .into_iter()
        .enumerate()
        .map(|(id, refs)| {
            let detections: Vec<Detection> =
                refs.into_iter().map(|(t, i)| slots[t][i].take().expect("each detection is used once")).collect();
            Track { id, category: majority_category(&detections), detections }
        })
        .collect()
}
