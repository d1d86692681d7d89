//! Early fusion (re-detect the merged cloud), then late fusion (NMS over
//! local and received boxes).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{detect, Detection, DetectionSet, DetectorProfile};
use crate::geometry::{nms, OrientedBox3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub nms_thresh: f64,
    /// Score given to received boxes, whose confidence is not transmitted.
    pub recv_box_score: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { nms_thresh: 0.15, recv_box_score: 0.5 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.nms_thresh > 0.0 && self.nms_thresh < 1.0) {
            return Err("fusion.nms_thresh must lie in (0, 1)".into());
        }
        if !(self.recv_box_score > 0.0 && self.recv_box_score < 1.0) {
            return Err("fusion.recv_box_score must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Re-runs detection over the ego cloud merged with received points
/// (already in the ego frame). With nothing received this reproduces the
/// single-agent detection for the same stream.
pub fn fuse_early<R: Rng + ?Sized>(
    ego_cloud: &PointCloud,
    received: &[PointCloud],
    objects: &[OrientedBox3],
    profile: &DetectorProfile,
    rng: &mut R,
) -> DetectionSet {
    let extra: usize = received.iter().map(Vec::len).sum();
    if extra == 0 {
        return detect(ego_cloud, objects, profile, rng);
    }
    let mut merged = Vec::with_capacity(ego_cloud.len() + extra);
    merged.extend_from_slice(ego_cloud);
    for pts in received {
        merged.extend_from_slice(pts);
    }
    detect(&merged, objects, profile, rng)
}

/// Unions local detections with received boxes and suppresses duplicates.
/// Local detections come first, so on equal scores they win.
pub fn fuse_late(local: &DetectionSet, received: &[OrientedBox3], cfg: &FusionConfig) -> DetectionSet {
    if received.is_empty() {
        return local.clone();
    }
    let mut pool: Vec<Detection> = local.detections.clone();
    pool.extend(received.iter().map(|&bbox| Detection { bbox, confidence: cfg.recv_box_score, ux: 0.0, uy: 0.0 }));
    let scored: Vec<(OrientedBox3, f64)> = pool.iter().map(|d| (d.bbox, d.confidence)).collect();
    DetectionSet::new(nms(&scored, cfg.nms_thresh).into_iter().map(|i| pool[i]).collect())
}
