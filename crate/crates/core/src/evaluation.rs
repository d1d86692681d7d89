//! Detection matching, all-point AP, and payload accounting.

use serde::{Deserialize, Serialize};

use crate::detector::DetectionSet;
use crate::geometry::{descending_order, rotated_iou_bev, OrientedBox3};
use crate::messaging::HybridMessage;

pub const IOU_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap30: f64,
    pub ap50: f64,
    pub ap70: f64,
    pub n_gt: usize,
    pub n_det: usize,
}

impl ApResult {
    pub fn as_array(&self) -> [f64; 3] {
        [self.ap30, self.ap50, self.ap70]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub payload_bytes: u64,
    pub log2_bytes: f64,
}

impl VolumeReport {
    pub fn from_bytes(payload_bytes: u64) -> Self {
        VolumeReport { payload_bytes, log2_bytes: (payload_bytes.max(1) as f64).log2() }
    }
}

/// Greedy matching in descending confidence. Returns one flag per
/// detection, aligned with `dets.detections`.
pub fn match_detections(dets: &DetectionSet, gts: &[OrientedBox3], iou_thresh: f64) -> Vec<bool> {
    let mut flags = vec![false; dets.len()];
    let mut taken = vec![false; gts.len()];
    for i in descending_order(dets.confidences()) {
        let b = &dets.detections[i].bbox;
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !taken[*g])
            .map(|(g, gt)| (g, rotated_iou_bev(b, gt)))
            .fold(None::<(usize, f64)>, |acc, (g, iou)| match acc {
                Some((_, best)) if best >= iou => acc,
                _ => Some((g, iou)),
            });
        if let Some((g, iou)) = best {
            if iou >= iou_thresh {
                taken[g] = true;
                flags[i] = true;
            }
        }
    }
    flags
}

/// Area under the precision envelope for TP/FP flags already sorted by
/// descending confidence. With no ground truth the score is 1 for an empty
/// detection list and 0 otherwise.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    for (k, &hit) in flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

pub fn ap_at(dets: &DetectionSet, gts: &[OrientedBox3], iou_thresh: f64) -> f64 {
    let flags = match_detections(dets, gts, iou_thresh);
    let sorted: Vec<bool> = descending_order(dets.confidences()).into_iter().map(|i| flags[i]).collect();
    average_precision(&sorted, gts.len())
}

pub fn evaluate(dets: &DetectionSet, gts: &[OrientedBox3]) -> ApResult {
    let [ap30, ap50, ap70] = IOU_THRESHOLDS.map(|t| ap_at(dets, gts, t));
    ApResult { ap30, ap50, ap70, n_gt: gts.len(), n_det: dets.len() }
}

pub fn communication_volume<'a>(msgs: impl IntoIterator<Item = &'a HybridMessage>) -> VolumeReport {
    VolumeReport::from_bytes(msgs.into_iter().map(HybridMessage::payload_bytes).sum())
}
