//! Planar poses, yaw-rotated boxes, BEV IoU and greedy NMS.
//!
//! Every simulated object rests on a shared ground plane, so overlap is
//! measured on the bird's-eye footprint. Heights only matter for point
//! containment.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Polygon areas below this are treated as zero.
pub const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box dimensions must be positive and finite (l={l}, w={w}, h={h})")]
    InvalidDimensions { l: f64, w: f64, h: f64 },
    #[error("box parameters must be finite")]
    NonFinite,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid can round up to exactly 2*pi, which lands on -pi+0 above.
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        PlanarPose { x, y, yaw: normalize_angle(yaw) }
    }

    pub fn identity() -> Self {
        PlanarPose { x: 0.0, y: 0.0, yaw: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// Maps frame-local planar coordinates into the world frame.
    pub fn to_world(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * x - s * y, self.y + s * x + c * y)
    }

    /// Maps world planar coordinates into this frame.
    pub fn from_world(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.x, y - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

impl Default for PlanarPose {
    fn default() -> Self {
        PlanarPose::identity()
    }
}

/// A LiDAR return: position in meters plus intensity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point3 { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

pub type PointCloud = Vec<Point3>;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawBox {
    cx: f64,
    cy: f64,
    cz: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
}

/// A yaw-rotated 3D box. `l` runs along the heading, `w` across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct OrientedBox3 {
    cx: f64,
    cy: f64,
    cz: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
}

impl TryFrom<RawBox> for OrientedBox3 {
    type Error = GeometryError;

    fn try_from(r: RawBox) -> Result<Self, Self::Error> {
        OrientedBox3::new(r.cx, r.cy, r.cz, r.l, r.w, r.h, r.yaw)
    }
}

impl From<OrientedBox3> for RawBox {
    fn from(b: OrientedBox3) -> Self {
        RawBox { cx: b.cx, cy: b.cy, cz: b.cz, l: b.l, w: b.w, h: b.h, yaw: b.yaw }
    }
}

impl OrientedBox3 {
    pub fn new(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64) -> Result<Self, GeometryError> {
        if ![cx, cy, cz, yaw].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(l > 0.0 && w > 0.0 && h > 0.0 && l.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::InvalidDimensions { l, w, h });
        }
        Ok(OrientedBox3 { cx, cy, cz, l, w, h, yaw: normalize_angle(yaw) })
    }

    /// Builds a box from the 7-parameter regression layout `(x, y, z, l, w, h, yaw)`.
    pub fn from_params(p: [f64; 7]) -> Result<Self, GeometryError> {
        OrientedBox3::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6])
    }

    pub fn params(&self) -> [f64; 7] {
        [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw]
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn cz(&self) -> f64 {
        self.cz
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn z_min(&self) -> f64 {
        self.cz - self.h / 2.0
    }

    pub fn z_max(&self) -> f64 {
        self.cz + self.h / 2.0
    }

    /// Copy with footprint dimensions replaced.
    pub fn with_footprint(&self, l: f64, w: f64) -> Result<Self, GeometryError> {
        OrientedBox3::new(self.cx, self.cy, self.cz, l, w, self.h, self.yaw)
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    /// Footprint corners, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[u, v]| [self.cx + c * u - s * v, self.cy + s * u + c * v])
    }

    /// Planar offset of `(x, y)` in the box frame.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn contains(&self, p: &Point3, margin: f64) -> bool {
        point_in_box(self, p, margin)
    }

    /// Re-expresses a box given in `src` coordinates in `dst` coordinates.
    pub fn transformed(&self, src: &PlanarPose, dst: &PlanarPose) -> Self {
        let (wx, wy) = src.to_world(self.cx, self.cy);
        let (x, y) = dst.from_world(wx, wy);
        OrientedBox3 {
            cx: x,
            cy: y,
            cz: self.cz,
            l: self.l,
            w: self.w,
            h: self.h,
            yaw: normalize_angle(self.yaw + src.yaw - dst.yaw),
        }
    }
}

/// Expresses a point observed in frame `src` in frame `dst`.
pub fn transform_to_frame(p: Point3, src: &PlanarPose, dst: &PlanarPose) -> Point3 {
    let (wx, wy) = src.to_world(p.x, p.y);
    let (x, y) = dst.from_world(wx, wy);
    Point3 { x, y, ..p }
}

/// Containment with a planar margin added to each side; the vertical
/// extent is never padded.
pub fn point_in_box(b: &OrientedBox3, p: &Point3, margin: f64) -> bool {
    let (u, v) = b.to_local(p.x, p.y);
    u.abs() <= b.l / 2.0 + margin && v.abs() <= b.w / 2.0 + margin && p.z >= b.z_min() && p.z <= b.z_max()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    acc / 2.0
}

/// Sutherland-Hodgman clip of `subject` against the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn segment_line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom.abs() < f64::MIN_POSITIVE {
        return q;
    }
    let t = dp / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Overlap area of two box footprints.
pub fn bev_intersection_area(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    let dx = a.cx - b.cx;
    let dy = a.cy - b.cy;
    let ra = (a.l * a.l + a.w * a.w).sqrt() / 2.0;
    let rb = (b.l * b.l + b.w * b.w).sqrt() / 2.0;
    if dx * dx + dy * dy > (ra + rb) * (ra + rb) {
        return 0.0;
    }
    let area = polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners())).abs();
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Intersection-over-union of the two footprints, in `[0, 1]`.
pub fn rotated_iou_bev(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.bev_area() + b.bev_area() - inter;
    if union < AREA_EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS. Visits boxes by descending score (ties: lower index first)
/// and drops any box whose IoU with an already kept box exceeds
/// `iou_thresh`. Returns kept indices in visiting order.
pub fn nms(dets: &[(OrientedBox3, f64)], iou_thresh: f64) -> Vec<usize> {
    let order = descending_order(dets.iter().map(|d| d.1));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let b = &dets[i].0;
        if kept.iter().all(|&k| rotated_iou_bev(&dets[k].0, b) <= iou_thresh) {
            kept.push(i);
        }
    }
    kept
}

/// Indices sorted by descending score, ties broken by lower index.
pub fn descending_order(scores: impl IntoIterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.into_iter().collect();
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (ab_x, ab_y) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ab_x * ab_x + ab_y * ab_y;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab_x + (p[1] - a[1]) * ab_y) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * ab_x, a[1] + t * ab_y);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// Euclidean gap between two footprints; zero when they touch or overlap.
pub fn footprint_distance(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    if bev_intersection_area(a, b) > 0.0 {
        return 0.0;
    }
    let ca = a.bev_corners();
    let cb = b.bev_corners();
    let mut best = f64::INFINITY;
    for (pts, edges) in [(&ca, &cb), (&cb, &ca)] {
        for p in pts.iter() {
            for i in 0..4 {
                best = best.min(point_segment_distance(*p, edges[i], edges[(i + 1) % 4]));
            }
        }
    }
    best
}

/// Distance from a planar point to a footprint; zero inside.
pub fn point_footprint_distance(b: &OrientedBox3, x: f64, y: f64) -> f64 {
    let (u, v) = b.to_local(x, y);
    let du = (u.abs() - b.l / 2.0).max(0.0);
    let dv = (v.abs() - b.w / 2.0).max(0.0);
    (du * du + dv * dv).sqrt()
}
