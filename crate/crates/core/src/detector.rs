//! Noisy-oracle detector.
//!
//! Stands in for a learned single-agent detector. Localization error
//! shrinks as `sigma0 / sqrt(n)` with the number of supporting points, and
//! the reported variance follows the same law, so sparse objects come out
//! both inaccurate and visibly uncertain.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{nms, normalize_angle, point_in_box, OrientedBox3, PointCloud};

/// Planar slack used when attributing points to ground-truth boxes.
pub const COUNT_MARGIN: f64 = 0.1;

const CONFIDENCE_FLOOR: f64 = 0.05;
const CONFIDENCE_CEIL: f64 = 0.99;
const FP_CONFIDENCE: [f64; 2] = [0.05, 0.3];
const FP_PLACEMENT_TRIES: usize = 20;
const MIN_DIM: f64 = 0.1;

/// A detected box with confidence and center variances `(ux, uy)` in m^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: OrientedBox3,
    pub confidence: f64,
    pub ux: f64,
    pub uy: f64,
}

/// The sparse post-NMS output of one detector run, ordered by descending
/// confidence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>) -> Self {
        DetectionSet { detections }
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.detections.iter().map(|d| d.confidence).collect()
    }

    pub fn variances(&self) -> Vec<[f64; 2]> {
        self.detections.iter().map(|d| [d.ux, d.uy]).collect()
    }

    pub fn boxes(&self) -> Vec<OrientedBox3> {
        self.detections.iter().map(|d| d.bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorProfile {
    pub name: String,
    /// Center-noise scale in meters at one supporting point.
    pub sigma0: f64,
    /// Point count at which confidence reaches one half.
    pub n_half: f64,
    /// Detection probability is `1 - exp(-n / p_scale)`.
    pub p_scale: f64,
    pub dim_sigma: f64,
    pub yaw_sigma: f64,
    /// False positives per 1000 m^2 of free area.
    pub fp_rate: f64,
    /// Radius of the disc, centered on the sensor, in which false positives appear.
    pub fp_radius: f64,
    /// Multiplier on the reported variance; 1 means calibrated.
    pub calib_gamma: f64,
    pub nms_thresh: f64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        DetectorProfile {
            name: "baseline".into(),
            sigma0: 1.0,
            n_half: 8.0,
            p_scale: 3.0,
            dim_sigma: 0.05,
            yaw_sigma: 0.02,
            fp_rate: 0.05,
            fp_radius: 80.0,
            calib_gamma: 1.0,
            nms_thresh: 0.15,
        }
    }
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<(), String> {
        let scales = [
            ("sigma0", self.sigma0),
            ("n_half", self.n_half),
            ("p_scale", self.p_scale),
            ("dim_sigma", self.dim_sigma),
            ("yaw_sigma", self.yaw_sigma),
            ("fp_rate", self.fp_rate),
            ("fp_radius", self.fp_radius),
        ];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("profile {}: {name} must be finite and >= 0", self.name));
            }
        }
        if !(self.calib_gamma > 0.0 && self.calib_gamma.is_finite()) {
            return Err(format!("profile {}: calib_gamma must be > 0", self.name));
        }
        if !(self.nms_thresh > 0.0 && self.nms_thresh < 1.0) {
            return Err(format!("profile {}: nms_thresh must lie in (0, 1)", self.name));
        }
        Ok(())
    }

    /// Confidence for an object supported by `n` points, before clamping.
    pub fn raw_confidence(&self, n: usize) -> f64 {
        let n = n as f64;
        n / (n + self.n_half)
    }

    pub fn confidence(&self, n: usize) -> f64 {
        self.raw_confidence(n).clamp(CONFIDENCE_FLOOR, CONFIDENCE_CEIL)
    }

    /// Per-axis center std for `n >= 1` supporting points.
    pub fn center_sigma(&self, n: usize) -> f64 {
        self.sigma0 / (n as f64).sqrt()
    }

    pub fn reported_variance(&self, n: usize) -> f64 {
        self.calib_gamma * self.center_sigma(n).powi(2)
    }

    pub fn detection_probability(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else if self.p_scale == 0.0 {
            1.0
        } else {
            1.0 - (-(n as f64) / self.p_scale).exp()
        }
    }
}

/// Named detector presets for heterogeneous fleets. `k = 1` is the default
/// profile; beyond the four presets, variants with a progressively larger
/// `sigma0` are appended.
///
/// | name     | sigma0 | n_half | fp_rate |
/// |----------|--------|--------|---------|
/// | baseline | 1.00   | 8      | 0.05    |
/// | coarse   | 1.30   | 12     | 0.08    |
/// | sharp    | 0.75   | 6      | 0.03    |
/// | noisy    | 1.10   | 10     | 0.10    |
pub fn heterogeneous_profiles(k: usize) -> Vec<DetectorProfile> {
    let base = DetectorProfile::default();
    let presets = [
        base.clone(),
        DetectorProfile { name: "coarse".into(), sigma0: 1.3, n_half: 12.0, fp_rate: 0.08, ..base.clone() },
        DetectorProfile { name: "sharp".into(), sigma0: 0.75, n_half: 6.0, fp_rate: 0.03, ..base.clone() },
        DetectorProfile { name: "noisy".into(), sigma0: 1.1, n_half: 10.0, fp_rate: 0.1, ..base.clone() },
    ];
    (0..k)
        .map(|i| {
            let mut p = presets[i % presets.len()].clone();
            let round = i / presets.len();
            if round > 0 {
                p.sigma0 *= 1.0 + 0.1 * round as f64;
                p.name = format!("{}-{}", p.name, round);
            }
            p
        })
        .collect()
}

/// Number of points attributed to each box. Points are tested with a
/// 0.1 m planar margin; a point inside several boxes goes to the nearest
/// center.
pub fn count_points_per_object(cloud: &PointCloud, objects: &[OrientedBox3]) -> Vec<usize> {
    let mut counts = vec![0usize; objects.len()];
    for p in cloud {
        let mut best: Option<(f64, usize)> = None;
        for (i, b) in objects.iter().enumerate() {
            if point_in_box(b, p, COUNT_MARGIN) {
                let d = (p.x - b.cx()).powi(2) + (p.y - b.cy()).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
        }
        if let Some((_, i)) = best {
            counts[i] += 1;
        }
    }
    counts
}

/// Runs the noisy-oracle detector on a cloud whose ground truth is
/// `objects` (in the cloud's frame).
///
/// Every object consumes the same seven draws whether or not it is
/// detected, so two runs that share a stream but see different point
/// counts stay paired object by object.
pub fn detect<R: Rng + ?Sized>(
    cloud: &PointCloud,
    objects: &[OrientedBox3],
    profile: &DetectorProfile,
    rng: &mut R,
) -> DetectionSet {
    let counts = count_points_per_object(cloud, objects);
    let mut raw: Vec<Detection> = Vec::new();

    for (b, &n) in objects.iter().zip(&counts) {
        let u: f64 = rng.random();
        let z: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if n == 0 || u >= profile.detection_probability(n) {
            continue;
        }
        let sigma = profile.center_sigma(n);
        let perturbed = OrientedBox3::new(
            b.cx() + sigma * z[0],
            b.cy() + sigma * z[1],
            b.cz(),
            (b.l() + profile.dim_sigma * z[2]).max(MIN_DIM),
            (b.w() + profile.dim_sigma * z[3]).max(MIN_DIM),
            (b.h() + profile.dim_sigma * z[4]).max(MIN_DIM),
            b.yaw() + profile.yaw_sigma * z[5],
        )
        .expect("perturbed box stays valid");
        let var = profile.reported_variance(n);
        raw.push(Detection { bbox: perturbed, confidence: profile.confidence(n), ux: var, uy: var });
    }

    raw.extend(false_positives(objects, profile, rng));

    let scored: Vec<(OrientedBox3, f64)> = raw.iter().map(|d| (d.bbox, d.confidence)).collect();
    let kept = nms(&scored, profile.nms_thresh);
    DetectionSet::new(kept.into_iter().map(|i| raw[i]).collect())
}

fn false_positives<R: Rng + ?Sized>(objects: &[OrientedBox3], profile: &DetectorProfile, rng: &mut R) -> Vec<Detection> {
    let radius = profile.fp_radius;
    let occupied: f64 = objects
        .iter()
        .filter(|b| b.cx().hypot(b.cy()) <= radius)
        .map(|b| b.bev_area())
        .sum();
    let free_area = (PI * radius * radius - occupied).max(0.0);
    let lambda = profile.fp_rate * free_area / 1000.0;
    let count = if lambda > 0.0 {
        Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };

    let var = (3.0 * profile.sigma0).powi(2);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let l = rng.random_range(3.6..5.0);
        let w = rng.random_range(1.6..2.1);
        let h = rng.random_range(1.4..1.9);
        let yaw = rng.random_range(-PI..PI);
        let confidence = rng.random_range(FP_CONFIDENCE[0]..FP_CONFIDENCE[1]);
        for _ in 0..FP_PLACEMENT_TRIES {
            let r = radius * rng.random::<f64>().sqrt();
            let t = rng.random_range(-PI..PI);
            let candidate = OrientedBox3::new(r * t.cos(), r * t.sin(), h / 2.0, l, w, h, normalize_angle(yaw))
                .expect("prior dimensions are positive");
            if objects.iter().all(|o| crate::geometry::bev_intersection_area(o, &candidate) == 0.0) {
                out.push(Detection { bbox: candidate, confidence, ux: var, uy: var });
                break;
            }
        }
    }
    out
}
