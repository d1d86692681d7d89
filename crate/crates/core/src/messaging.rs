//! Hybrid message packing under a float budget, and the wire format.
//!
//! A budget counts 32-bit values. Boxes cost 7 values `(x, y, z, l, w, h,
//! yaw)` and points cost 4 `(x, y, z, intensity)`. Boxes are packed first,
//! most confident first; whatever is left after all `K` boxes buys points,
//! drawn with a bias towards points inside uncertain detections.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectionSet;
use crate::geometry::{descending_order, point_in_box, OrientedBox3, PlanarPose, Point3, PointCloud};

pub const BOX_FLOATS: u64 = 7;
pub const POINT_FLOATS: u64 = 4;
pub const BOX_BYTES: u64 = BOX_FLOATS * 4;
pub const POINT_BYTES: u64 = POINT_FLOATS * 4;

pub const WIRE_MAGIC: [u8; 4] = *b"HYC1";
pub const WIRE_VERSION: u16 = 1;
/// magic + version + pose + two counts.
pub const HEADER_BYTES: usize = 4 + 2 + 12 + 4 + 4;

/// Channel capacity for one round, in 32-bit values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Budget(pub u64);

impl Budget {
    pub fn floats(self) -> u64 {
        self.0
    }

    pub fn bytes(self) -> u64 {
        self.0 * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetSplit {
    pub b_box: usize,
    pub b_point: usize,
}

/// Boxes first: `min(K, B / 7)` boxes, then `(B - 7K) / 4` points once
/// every detection fits. Both divisions floor.
pub fn allocate_budget(budget: Budget, k: usize) -> BudgetSplit {
    let b = budget.floats();
    let k64 = k as u64;
    let b_box = k64.min(b / BOX_FLOATS) as usize;
    let b_point = if b > BOX_FLOATS * k64 { ((b - BOX_FLOATS * k64) / POINT_FLOATS) as usize } else { 0 };
    BudgetSplit { b_box, b_point }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask(pub Vec<bool>);

impl SelectionMask {
    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Total confidence covered by the mask.
    pub fn score(&self, confidences: &[f64]) -> f64 {
        self.selected().map(|i| confidences[i]).sum()
    }
}

/// Picks the `b_box` most confident detections (ties: lower index). This
/// maximizes the selected confidence mass under the cardinality limit.
pub fn select_boxes(confidences: &[f64], b_box: usize) -> SelectionMask {
    let mut mask = vec![false; confidences.len()];
    for i in descending_order(confidences.iter().copied()).into_iter().take(b_box) {
        mask[i] = true;
    }
    SelectionMask(mask)
}

/// One box on the wire: `(x, y, z, l, w, h, yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord(pub [f32; 7]);

impl BoxRecord {
    pub fn from_box(b: &OrientedBox3) -> Self {
        BoxRecord(b.params().map(|v| v as f32))
    }

    pub fn to_f64(&self) -> [f64; 7] {
        self.0.map(f64::from)
    }
}

/// One point on the wire: `(x, y, z, intensity)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord(pub [f32; 4]);

impl PointRecord {
    pub fn from_point(p: &Point3) -> Self {
        PointRecord([p.x as f32, p.y as f32, p.z as f32, p.intensity as f32])
    }

    pub fn to_point(&self) -> Point3 {
        let [x, y, z, i] = self.0.map(f64::from);
        Point3::new(x, y, z, i)
    }
}

/// Regression parameters of the selected detections, most confident
/// first. Confidence and uncertainty stay with the sender.
pub fn pack_box_message(dets: &DetectionSet, mask: &SelectionMask) -> Vec<BoxRecord> {
    assert_eq!(mask.len(), dets.len(), "mask length must equal detection count");
    let conf = dets.confidences();
    descending_order(conf.iter().copied())
        .into_iter()
        .filter(|&i| mask.0[i])
        .map(|i| BoxRecord::from_box(&dets.detections[i].bbox))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackerConfig {
    /// Weight of points outside every expanded detection.
    pub delta: f64,
    /// Largest extent, in meters, that expansion may add to `l` or `w`.
    pub expand_cap: f64,
}

impl Default for PackerConfig {
    fn default() -> Self {
        PackerConfig { delta: 1e-3, expand_cap: 2.0 }
    }
}

impl PackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err("packer.delta must be > 0".into());
        }
        if !(self.expand_cap >= 0.0) {
            return Err("packer.expand_cap must be >= 0".into());
        }
        Ok(())
    }
}

/// How candidate points are weighted before sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointWeighting {
    /// `ux + uy` of the most uncertain containing detection.
    Uncertainty,
    /// A flat unit weight inside any detection.
    FlatInside,
    /// `delta` everywhere.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointPackerMode {
    pub expand: bool,
    pub weighting: PointWeighting,
    /// Reserve no budget for boxes and send none.
    pub points_only: bool,
}

impl Default for PointPackerMode {
    fn default() -> Self {
        PointPackerMode { expand: true, weighting: PointWeighting::Uncertainty, points_only: false }
    }
}

/// Grows each footprint by `2 * sqrt(u)` per axis, capped at `expand_cap`.
pub fn expand_boxes(dets: &DetectionSet, cfg: &PackerConfig) -> Vec<OrientedBox3> {
    dets.detections
        .iter()
        .map(|d| {
            let dl = (2.0 * d.ux.max(0.0).sqrt()).min(cfg.expand_cap);
            let dw = (2.0 * d.uy.max(0.0).sqrt()).min(cfg.expand_cap);
            d.bbox.with_footprint(d.bbox.l() + dl, d.bbox.w() + dw).expect("expansion keeps dims positive")
        })
        .collect()
}

/// Per-point sampling weights. `regions[k]` is the (possibly expanded)
/// footprint of `dets.detections[k]`.
pub fn weight_points(
    cloud: &PointCloud,
    regions: &[OrientedBox3],
    dets: &DetectionSet,
    cfg: &PackerConfig,
    weighting: PointWeighting,
) -> Vec<f64> {
    debug_assert_eq!(regions.len(), dets.len());
    if weighting == PointWeighting::Uniform {
        return vec![cfg.delta; cloud.len()];
    }
    cloud
        .iter()
        .map(|p| {
            let mut w = cfg.delta;
            for (r, d) in regions.iter().zip(&dets.detections) {
                if point_in_box(r, p, 0.0) {
                    let candidate = match weighting {
                        PointWeighting::Uncertainty => d.ux + d.uy,
                        _ => 1.0,
                    };
                    w = w.max(candidate);
                }
            }
            w
        })
        .collect()
}

/// Weighted sampling without replacement by exponential keys: each point
/// draws `u ~ U(0, 1]` and gets key `u^(1/w)`; the largest keys win.
/// Returns selected indices in cloud order.
pub fn weighted_sample_indices<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    if count >= weights.len() {
        return (0..weights.len()).collect();
    }
    if count == 0 {
        return Vec::new();
    }
    // ln(u) / w orders identically to u^(1/w) and avoids underflow.
    let keys: Vec<f64> = weights
        .iter()
        .map(|&w| {
            let u = 1.0 - rng.random::<f64>();
            u.ln() / w
        })
        .collect();
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.select_nth_unstable_by(count - 1, |&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

pub fn weighted_sample<R: Rng + ?Sized>(cloud: &PointCloud, weights: &[f64], b_point: usize, rng: &mut R) -> Vec<PointRecord> {
    assert_eq!(cloud.len(), weights.len(), "one weight per point");
    weighted_sample_indices(weights, b_point, rng)
        .into_iter()
        .map(|i| PointRecord::from_point(&cloud[i]))
        .collect()
}

/// A hybrid message: selected boxes plus sampled points, with the pose the
/// sender believes it has.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HybridMessage {
    /// `(x, y, yaw)` at wire precision.
    pub sender_pose: [f32; 3],
    pub boxes: Vec<BoxRecord>,
    pub points: Vec<PointRecord>,
}

impl HybridMessage {
    pub fn empty(sender_pose: &PlanarPose) -> Self {
        HybridMessage { sender_pose: pose_record(sender_pose), boxes: Vec::new(), points: Vec::new() }
    }

    pub fn sender_pose(&self) -> PlanarPose {
        let [x, y, yaw] = self.sender_pose.map(f64::from);
        PlanarPose { x, y, yaw }
    }

    pub fn payload_floats(&self) -> u64 {
        BOX_FLOATS * self.boxes.len() as u64 + POINT_FLOATS * self.points.len() as u64
    }

    /// Bytes charged against the budget; the header is not counted.
    pub fn payload_bytes(&self) -> u64 {
        BOX_BYTES * self.boxes.len() as u64 + POINT_BYTES * self.points.len() as u64
    }
}

pub fn pose_record(p: &PlanarPose) -> [f32; 3] {
    [p.x as f32, p.y as f32, p.yaw as f32]
}

/// Full packing pipeline for one sender: allocate, select and pack boxes,
/// then expand, weight and sample points.
pub fn pack_hybrid<R: Rng + ?Sized>(
    dets: &DetectionSet,
    cloud: &PointCloud,
    budget: Budget,
    cfg: &PackerConfig,
    mode: PointPackerMode,
    sender_pose: &PlanarPose,
    rng: &mut R,
) -> HybridMessage {
    let k = if mode.points_only { 0 } else { dets.len() };
    let split = allocate_budget(budget, k);
    let mut msg = HybridMessage::empty(sender_pose);
    if !mode.points_only {
        let mask = select_boxes(&dets.confidences(), split.b_box);
        msg.boxes = pack_box_message(dets, &mask);
    }
    if split.b_point > 0 {
        let regions = if mode.expand { expand_boxes(dets, cfg) } else { dets.boxes() };
        let weights = weight_points(cloud, &regions, dets, cfg, mode.weighting);
        msg.points = weighted_sample(cloud, &weights, split.b_point, rng);
    }
    debug_assert!(msg.payload_floats() <= budget.floats());
    msg
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u16),
    #[error("frame truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("frame length {actual} does not match counts (expected {expected})")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("record count {0} exceeds u32")]
    CountOverflow(usize),
}

/// Encodes a message: `"HYC1"`, version `u16`, pose `3 x f32`, box count
/// `u32`, point count `u32`, then `7 x f32` per box and `4 x f32` per
/// point. Everything little-endian.
pub fn serialize(msg: &HybridMessage) -> Result<Vec<u8>, WireError> {
    let n_boxes = u32::try_from(msg.boxes.len()).map_err(|_| WireError::CountOverflow(msg.boxes.len()))?;
    let n_points = u32::try_from(msg.points.len()).map_err(|_| WireError::CountOverflow(msg.points.len()))?;
    let mut out = Vec::with_capacity(HEADER_BYTES + msg.payload_bytes() as usize);
    out.extend_from_slice(&WIRE_MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    for v in msg.sender_pose {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&n_boxes.to_le_bytes());
    out.extend_from_slice(&n_points.to_le_bytes());
    for b in &msg.boxes {
        for v in b.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for p in &msg.points {
        for v in p.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or(WireError::Truncated { needed: end, available: self.buf.len() })?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length N"))
    }

    fn f32(&mut self) -> Result<f32, WireError> {
        self.take::<4>().map(f32::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        self.take::<4>().map(u32::from_le_bytes)
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<HybridMessage, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take::<4>()?;
    if magic != WIRE_MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(r.take::<2>()?);
    if version != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let sender_pose = [r.f32()?, r.f32()?, r.f32()?];
    let n_boxes = r.u32()? as usize;
    let n_points = r.u32()? as usize;
    let expected = n_boxes
        .checked_mul(BOX_BYTES as usize)
        .and_then(|b| n_points.checked_mul(POINT_BYTES as usize).and_then(|p| b.checked_add(p)))
        .and_then(|payload| payload.checked_add(HEADER_BYTES))
        .ok_or(WireError::LengthMismatch { expected: usize::MAX, actual: bytes.len() })?;
    if bytes.len() != expected {
        return Err(if bytes.len() < expected {
            WireError::Truncated { needed: expected, available: bytes.len() }
        } else {
            WireError::LengthMismatch { expected, actual: bytes.len() }
        });
    }
    let mut boxes = Vec::with_capacity(n_boxes);
    for _ in 0..n_boxes {
        let mut rec = [0f32; 7];
        for v in rec.iter_mut() {
            *v = r.f32()?;
        }
        boxes.push(BoxRecord(rec));
    }
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let mut rec = [0f32; 4];
        for v in rec.iter_mut() {
            *v = r.f32()?;
        }
        points.push(PointRecord(rec));
    }
    Ok(HybridMessage { sender_pose, boxes, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Detection;
    use crate::seeds::SimRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn det(cx: f64, conf: f64, ux: f64, uy: f64) -> Detection {
        Detection { bbox: OrientedBox3::new(cx, 0.0, 0.8, 4.0, 2.0, 1.6, 0.1).unwrap(), confidence: conf, ux, uy }
    }

    fn dset(confs: &[f64]) -> DetectionSet {
        DetectionSet::new(confs.iter().enumerate().map(|(i, &c)| det(10.0 * i as f64, c, 0.1, 0.1)).collect())
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_budget(Budget(100), 10), BudgetSplit { b_box: 10, b_point: 7 });
        assert_eq!(allocate_budget(Budget(35), 10), BudgetSplit { b_box: 5, b_point: 0 });
        assert_eq!(allocate_budget(Budget(0), 10), BudgetSplit { b_box: 0, b_point: 0 });
        assert_eq!(allocate_budget(Budget(0), 0), BudgetSplit { b_box: 0, b_point: 0 });
        assert_eq!(allocate_budget(Budget(70), 10), BudgetSplit { b_box: 10, b_point: 0 });
        assert_eq!(allocate_budget(Budget(43), 0), BudgetSplit { b_box: 0, b_point: 10 });
    }

    /// Exhaustive oracle: best confidence mass over all masks with at most
    /// `b` members.
    fn brute_force_best(conf: &[f64], b: usize) -> f64 {
        let k = conf.len();
        (0u32..(1 << k))
            .filter(|m| m.count_ones() as usize <= b)
            .map(|m| (0..k).filter(|i| m & (1 << i) != 0).map(|i| conf[i]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    #[test]
    fn selection_examples() {
        let c = [0.9, 0.2, 0.7];
        let m = select_boxes(&c, 2);
        assert_eq!(m.0, vec![true, false, true]);
        assert_eq!(m.score(&c), brute_force_best(&c, 2));
        assert!((m.score(&c) - 1.6).abs() < 1e-12);
        assert_eq!(select_boxes(&c, 0).popcount(), 0);
        assert_eq!(select_boxes(&c, 5).0, vec![true; 3]);
        // Ties go to the lower index.
        assert_eq!(select_boxes(&[0.5, 0.5, 0.5], 2).0, vec![true, true, false]);
    }

    #[test]
    fn box_message_examples() {
        let d = dset(&[0.9, 0.2, 0.7]);
        assert!(pack_box_message(&d, &SelectionMask(vec![false; 3])).is_empty());
        let only0 = pack_box_message(&d, &SelectionMask(vec![true, false, false]));
        assert_eq!(only0, vec![BoxRecord::from_box(&d.detections[0].bbox)]);
        assert_eq!(only0[0].0, [0.0, 0.0, 0.8, 4.0, 2.0, 1.6, 0.1f64 as f32]);
        let two = pack_box_message(&d, &select_boxes(&d.confidences(), 2));
        assert_eq!(two, vec![BoxRecord::from_box(&d.detections[0].bbox), BoxRecord::from_box(&d.detections[2].bbox)]);
        // Order follows confidence, not index.
        let d2 = dset(&[0.3, 0.8]);
        let both = pack_box_message(&d2, &SelectionMask(vec![true, true]));
        assert_eq!(both[0], BoxRecord::from_box(&d2.detections[1].bbox));
    }

    #[test]
    fn expansion_examples() {
        let cfg = PackerConfig::default();
        let zero = DetectionSet::new(vec![det(0.0, 0.5, 0.0, 0.0)]);
        assert_eq!(expand_boxes(&zero, &cfg)[0], zero.detections[0].bbox);
        let d = DetectionSet::new(vec![det(0.0, 0.5, 0.25, 0.04)]);
        let e = expand_boxes(&d, &cfg)[0];
        assert!((e.l() - 5.0).abs() < 1e-12 && (e.w() - 2.4).abs() < 1e-12);
        assert_eq!((e.cx(), e.cy(), e.cz(), e.h(), e.yaw()), (0.0, 0.0, 0.8, 1.6, 0.1));
        let big = DetectionSet::new(vec![det(0.0, 0.5, 100.0, 100.0)]);
        let e = expand_boxes(&big, &cfg)[0];
        assert!((e.l() - 6.0).abs() < 1e-12 && (e.w() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighting_examples() {
        let cfg = PackerConfig::default();
        let cloud = vec![Point3::new(0.0, 0.0, 0.8, 0.1), Point3::new(50.0, 50.0, 0.8, 0.1)];
        let none = DetectionSet::default();
        assert_eq!(weight_points(&cloud, &[], &none, &cfg, PointWeighting::Uncertainty), vec![1e-3, 1e-3]);

        let one = DetectionSet::new(vec![det(0.0, 0.5, 0.1, 0.2)]);
        let w = weight_points(&cloud, &one.boxes(), &one, &cfg, PointWeighting::Uncertainty);
        assert!((w[0] - 0.3).abs() < 1e-12);
        assert_eq!(w[1], 1e-3);

        let two = DetectionSet::new(vec![det(0.0, 0.5, 0.05, 0.05), det(1.0, 0.4, 0.2, 0.2)]);
        let w = weight_points(&cloud, &two.boxes(), &two, &cfg, PointWeighting::Uncertainty);
        assert!((w[0] - 0.4).abs() < 1e-12);

        let flat = weight_points(&cloud, &two.boxes(), &two, &cfg, PointWeighting::FlatInside);
        assert_eq!(flat, vec![1.0, 1e-3]);
        let uni = weight_points(&cloud, &two.boxes(), &two, &cfg, PointWeighting::Uniform);
        assert_eq!(uni, vec![1e-3, 1e-3]);

        // Uncertainty below delta is floored.
        let tiny = DetectionSet::new(vec![det(0.0, 0.5, 1e-6, 1e-6)]);
        assert_eq!(weight_points(&cloud, &tiny.boxes(), &tiny, &cfg, PointWeighting::Uncertainty)[0], 1e-3);
    }

    #[test]
    fn sampling_whole_cloud_when_budget_allows() {
        let cloud: PointCloud = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0, 0.0)).collect();
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(weighted_sample(&cloud, &[1.0; 5], 5, &mut rng).len(), 5);
        assert_eq!(weighted_sample(&cloud, &[1.0; 5], 50, &mut rng).len(), 5);
        assert!(weighted_sample(&cloud, &[1.0; 5], 0, &mut rng).is_empty());
        let picked = weighted_sample_indices(&[1.0; 5], 3, &mut rng);
        assert_eq!(picked.len(), 3);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn equal_weights_sample_uniformly() {
        let mut rng = SimRng::seed_from_u64(1);
        let mut hits = [0usize; 4];
        let reps = 10_000;
        for _ in 0..reps {
            hits[weighted_sample_indices(&[0.5; 4], 1, &mut rng)[0]] += 1;
        }
        for h in hits {
            let f = h as f64 / reps as f64;
            assert!((f - 0.25).abs() <= 0.02, "frequency {f}");
        }
    }

    #[test]
    fn heavy_point_dominates() {
        let mut rng = SimRng::seed_from_u64(2);
        let reps = 10_000;
        let heavy = (0..reps)
            .filter(|_| weighted_sample_indices(&[1e-3, 1.0, 1e-3, 1e-3], 1, &mut rng)[0] == 1)
            .count();
        assert!(heavy as f64 / reps as f64 >= 0.99);
    }

    #[test]
    fn heavier_point_wins_more_often() {
        let mut rng = SimRng::seed_from_u64(3);
        let reps = 10_000usize;
        let first = (0..reps).filter(|_| weighted_sample_indices(&[0.6, 0.4], 1, &mut rng)[0] == 0).count();
        let p = first as f64 / reps as f64;
        let second = 1.0 - p;
        let sd = (p * (1.0 - p) / reps as f64).sqrt();
        assert!(p - second > 3.0 * sd);
        // Exponential keys give inclusion proportional to weight for one draw.
        assert!((p - 0.6).abs() < 0.02);
    }

    fn cloud_with(n: usize) -> PointCloud {
        (0..n).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.8, 0.3)).collect()
    }

    #[test]
    fn pack_hybrid_boundaries() {
        let d = dset(&[0.9, 0.4, 0.6, 0.2]);
        let cloud = cloud_with(100);
        let cfg = PackerConfig::default();
        let pose = PlanarPose::new(1.0, 2.0, 0.3);
        let mut rng = SimRng::seed_from_u64(4);
        let mode = PointPackerMode::default();

        let empty = pack_hybrid(&d, &cloud, Budget(0), &cfg, mode, &pose, &mut rng);
        assert!(empty.boxes.is_empty() && empty.points.is_empty());

        let boxes_only = pack_hybrid(&d, &cloud, Budget(28), &cfg, mode, &pose, &mut rng);
        assert_eq!((boxes_only.boxes.len(), boxes_only.points.len()), (4, 0));

        let plus = pack_hybrid(&d, &cloud, Budget(28 + 40), &cfg, mode, &pose, &mut rng);
        assert_eq!((plus.boxes.len(), plus.points.len()), (4, 10));

        let points_only = pack_hybrid(&d, &cloud, Budget(40), &cfg, PointPackerMode { points_only: true, ..mode }, &pose, &mut rng);
        assert_eq!((points_only.boxes.len(), points_only.points.len()), (0, 10));
    }

    #[test]
    fn wire_layout_examples() {
        let empty = HybridMessage::default();
        let bytes = serialize(&empty).unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES);
        assert_eq!(&bytes[..4], b"HYC1");
        assert_eq!(deserialize(&bytes).unwrap(), empty);

        let one_box = HybridMessage { boxes: vec![BoxRecord([1.0; 7])], ..Default::default() };
        assert_eq!(one_box.payload_bytes(), 28);
        assert_eq!(serialize(&one_box).unwrap().len(), HEADER_BYTES + 28);
        let one_point = HybridMessage { points: vec![PointRecord([1.0; 4])], ..Default::default() };
        assert_eq!(one_point.payload_bytes(), 16);
        assert_eq!(serialize(&one_point).unwrap().len(), HEADER_BYTES + 16);
    }

    #[test]
    fn malformed_frames_are_rejected() {
        let msg = HybridMessage { boxes: vec![BoxRecord([1.0; 7])], points: vec![PointRecord([2.0; 4])], ..Default::default() };
        let bytes = serialize(&msg).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(WireError::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(deserialize(&bad), Err(WireError::UnsupportedVersion(9)));

        for cut in [0, 3, 10, HEADER_BYTES - 1, HEADER_BYTES, bytes.len() - 1] {
            assert!(matches!(deserialize(&bytes[..cut]), Err(WireError::Truncated { .. })), "cut {cut}");
        }

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(deserialize(&long), Err(WireError::LengthMismatch { .. })));

        let mut huge = bytes.clone();
        huge[18..22].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(deserialize(&huge).is_err());
    }

    proptest! {
        #[test]
        fn selection_is_optimal(conf in prop::collection::vec(0.0..1.0f64, 0..12), b in 0usize..13) {
            let b = b.min(conf.len());
            let m = select_boxes(&conf, b);
            prop_assert!(m.popcount() <= b);
            prop_assert_eq!(m.score(&conf), brute_force_best(&conf, b));
        }

        #[test]
        fn wire_round_trip_is_exact(
            pose in prop::array::uniform3(any::<f32>()),
            boxes in prop::collection::vec(prop::array::uniform7(any::<f32>()), 0..5),
            points in prop::collection::vec(prop::array::uniform4(any::<f32>()), 0..20),
        ) {
            let msg = HybridMessage {
                sender_pose: pose,
                boxes: boxes.into_iter().map(BoxRecord).collect(),
                points: points.into_iter().map(PointRecord).collect(),
            };
            let bytes = serialize(&msg).unwrap();
            let back = deserialize(&bytes).unwrap();
            prop_assert_eq!(serialize(&back).unwrap(), bytes);
        }

        #[test]
        fn packing_never_exceeds_budget(n_det in 0usize..15, n_pts in 0usize..300, b in 0u64..2000, seed in any::<u64>()) {
            let confs: Vec<f64> = (0..n_det).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
            let d = dset(&confs);
            let cloud = cloud_with(n_pts);
            let mut rng = SimRng::seed_from_u64(seed);
            let msg = pack_hybrid(&d, &cloud, Budget(b), &PackerConfig::default(), PointPackerMode::default(), &PlanarPose::identity(), &mut rng);
            prop_assert!(msg.payload_bytes() <= 4 * b);
        }
    }
}
