//! Synthetic multi-agent worlds, ray-cast LiDAR and pose noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    footprint_distance, normalize_angle, point_footprint_distance, transform_to_frame, OrientedBox3,
    PlanarPose, Point3, PointCloud,
};
use crate::messaging::{BoxRecord, PointRecord};
use crate::seeds::{rng_for, tag};

/// Placement attempts allowed per object before giving up.
pub const PLACEMENT_RETRY_CAP: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("could not place object {placed} of {requested} after {PLACEMENT_RETRY_CAP} attempts; the world is too dense")]
    PlacementInfeasible { placed: usize, requested: usize },
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("invalid scenario snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Inclusive range for the number of objects.
    pub n_objects: [usize; 2],
    pub n_agents: usize,
    pub length_range: [f64; 2],
    pub width_range: [f64; 2],
    pub height_range: [f64; 2],
    pub min_gap: f64,
    /// Clear radius kept free of objects around each agent.
    pub agent_clearance: f64,
    /// Collaborators are placed in the world range scaled by this factor.
    pub collaborator_spread: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            x_range: [-100.0, 100.0],
            y_range: [-40.0, 40.0],
            n_objects: [30, 30],
            n_agents: 3,
            length_range: [3.6, 5.0],
            width_range: [1.6, 2.1],
            height_range: [1.4, 1.9],
            min_gap: 1.0,
            agent_clearance: 3.0,
            collaborator_spread: 0.5,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], allow_empty: bool) -> Result<(), ScenarioError> {
    let ok = r[0].is_finite() && r[1].is_finite() && if allow_empty { r[0] <= r[1] } else { r[0] < r[1] };
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::InvalidConfig(format!("{name} must be a non-empty [min, max] range, got {r:?}")))
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_range("x_range", self.x_range, false)?;
        check_range("y_range", self.y_range, false)?;
        check_range("length_range", self.length_range, true)?;
        check_range("width_range", self.width_range, true)?;
        check_range("height_range", self.height_range, true)?;
        if self.n_objects[0] > self.n_objects[1] {
            return Err(ScenarioError::InvalidConfig(format!("n_objects range {:?} is empty", self.n_objects)));
        }
        if self.n_agents < 1 {
            return Err(ScenarioError::InvalidConfig("n_agents must be at least 1".into()));
        }
        if self.length_range[0] <= 0.0 || self.width_range[0] <= 0.0 || self.height_range[0] <= 0.0 {
            return Err(ScenarioError::InvalidConfig("object sizes must be positive".into()));
        }
        if !(self.min_gap >= 0.0) || !(self.agent_clearance >= 0.0) {
            return Err(ScenarioError::InvalidConfig("min_gap and agent_clearance must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.collaborator_spread) {
            return Err(ScenarioError::InvalidConfig("collaborator_spread must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub n_rays: usize,
    pub max_range: f64,
    /// Std of the range noise; draws are truncated at three sigma.
    pub range_noise_sigma: f64,
    /// Ground returns per square meter of free space.
    pub background_rate: f64,
    /// Mount height; ground returns start beyond twice this range.
    pub z_mount: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            n_rays: 720,
            max_range: 80.0,
            range_noise_sigma: 0.02,
            background_rate: 0.015,
            z_mount: 1.8,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_rays < 1 {
            return Err(ScenarioError::InvalidConfig("n_rays must be at least 1".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(ScenarioError::InvalidConfig("max_range must be positive".into()));
        }
        if !(self.range_noise_sigma >= 0.0) || !(self.background_rate >= 0.0) || !(self.z_mount >= 0.0) {
            return Err(ScenarioError::InvalidConfig(
                "range_noise_sigma, background_rate and z_mount must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: usize,
    pub bbox: OrientedBox3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub pose: PlanarPose,
    pub sensor: SensorConfig,
}

/// A static world snapshot. Object boxes are in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub objects: Vec<WorldObject>,
    pub agents: Vec<Agent>,
    /// `neighbors[i]` lists the agents that send messages to agent `i`.
    pub neighbors: Vec<Vec<usize>>,
}

impl Scenario {
    pub fn agent(&self, id: usize) -> Result<&Agent, ScenarioError> {
        self.agents.get(id).filter(|a| a.id == id).ok_or(ScenarioError::UnknownAgent(id))
    }

    /// Ground-truth boxes expressed in the given agent's frame.
    pub fn objects_in_frame(&self, agent_id: usize) -> Result<Vec<OrientedBox3>, ScenarioError> {
        let pose = self.agent(agent_id)?.pose;
        let world = PlanarPose::identity();
        Ok(self.objects.iter().map(|o| o.bbox.transformed(&world, &pose)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(s).map_err(|e| ScenarioError::InvalidSnapshot(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Structural checks for snapshots that did not come from
    /// [`generate_world`].
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidSnapshot(m));
        if self.agents.is_empty() {
            return bad("no agents".into());
        }
        if self.neighbors.len() != self.agents.len() {
            return bad(format!("{} neighbor lists for {} agents", self.neighbors.len(), self.agents.len()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.id != i {
                return bad(format!("agent at index {i} has id {}", a.id));
            }
            if !a.pose.is_finite() {
                return bad(format!("agent {i} has a non-finite pose"));
            }
            a.sensor.validate()?;
            if let Some(&j) = self.neighbors[i].iter().find(|&&j| j >= self.agents.len() || j == i) {
                return bad(format!("agent {i} lists invalid neighbor {j}"));
            }
        }
        Ok(())
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn uniform_yaw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    normalize_angle(rng.random_range(-PI..PI))
}

/// Generates a world. Agent 0 sits at the origin facing +x, so the world
/// range doubles as its perception range; the other agents are scattered
/// in the central part of the range. All agents neighbor each other.
pub fn generate_world(cfg: &WorldConfig, sensor: &SensorConfig) -> Result<Scenario, ScenarioError> {
    cfg.validate()?;
    sensor.validate()?;
    let mut rng = rng_for(&[cfg.seed, tag::WORLD]);

    let mut agents = Vec::with_capacity(cfg.n_agents);
    agents.push(Agent { id: 0, pose: PlanarPose::identity(), sensor: *sensor });
    let sx = [cfg.x_range[0] * cfg.collaborator_spread, cfg.x_range[1] * cfg.collaborator_spread];
    let sy = [cfg.y_range[0] * cfg.collaborator_spread, cfg.y_range[1] * cfg.collaborator_spread];
    for id in 1..cfg.n_agents {
        let pose = PlanarPose::new(uniform_in(&mut rng, sx), uniform_in(&mut rng, sy), uniform_yaw(&mut rng));
        agents.push(Agent { id, pose, sensor: *sensor });
    }

    let requested = if cfg.n_objects[0] == cfg.n_objects[1] {
        cfg.n_objects[0]
    } else {
        rng.random_range(cfg.n_objects[0]..=cfg.n_objects[1])
    };
    let mut objects: Vec<WorldObject> = Vec::with_capacity(requested);
    while objects.len() < requested {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRY_CAP {
            let l = uniform_in(&mut rng, cfg.length_range);
            let w = uniform_in(&mut rng, cfg.width_range);
            let h = uniform_in(&mut rng, cfg.height_range);
            let x = uniform_in(&mut rng, cfg.x_range);
            let y = uniform_in(&mut rng, cfg.y_range);
            let yaw = uniform_yaw(&mut rng);
            let candidate = OrientedBox3::new(x, y, h / 2.0, l, w, h, yaw)
                .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
            let inside = candidate.bev_corners().iter().all(|c| {
                c[0] >= cfg.x_range[0] && c[0] <= cfg.x_range[1] && c[1] >= cfg.y_range[0] && c[1] <= cfg.y_range[1]
            });
            if !inside {
                continue;
            }
            if agents
                .iter()
                .any(|a| point_footprint_distance(&candidate, a.pose.x, a.pose.y) < cfg.agent_clearance)
            {
                continue;
            }
            if objects.iter().any(|o| footprint_distance(&o.bbox, &candidate) < cfg.min_gap) {
                continue;
            }
            objects.push(WorldObject { id: objects.len(), bbox: candidate });
            placed = true;
            break;
        }
        if !placed {
            return Err(ScenarioError::PlacementInfeasible { placed: objects.len(), requested });
        }
    }

    let neighbors = (0..cfg.n_agents).map(|i| (0..cfg.n_agents).filter(|&j| j != i).collect()).collect();
    Ok(Scenario { seed: cfg.seed, objects, agents, neighbors })
}

/// First intersection of the ray `origin + t * dir` (t > 0) with a
/// footprint boundary.
pub fn ray_footprint_hit(origin: (f64, f64), dir: (f64, f64), b: &OrientedBox3) -> Option<f64> {
    let corners = b.bev_corners();
    let mut best: Option<f64> = None;
    for i in 0..4 {
        let a = corners[i];
        let c = corners[(i + 1) % 4];
        let e = (c[0] - a[0], c[1] - a[1]);
        let denom = dir.0 * e.1 - dir.1 * e.0;
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = (a[0] - origin.0, a[1] - origin.1);
        let t = (w.0 * e.1 - w.1 * e.0) / denom;
        let s = (w.0 * dir.1 - w.1 * dir.0) / denom;
        if t > 1e-9 && (0.0..=1.0).contains(&s) && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

/// Ray-cast LiDAR sweep for one agent, returned in the agent's frame.
///
/// Each of the `n_rays` evenly spaced bearings yields at most one object
/// return: the nearest footprint edge within range. Ground clutter is
/// scattered along the free part of each ray, never past its first hit.
pub fn simulate_lidar(s: &Scenario, agent_id: usize) -> Result<PointCloud, ScenarioError> {
    let agent = s.agent(agent_id)?;
    let sensor = &agent.sensor;
    let mut rng = rng_for(&[s.seed, tag::LIDAR, agent_id as u64]);
    let objects = s.objects_in_frame(agent_id)?;
    let dtheta = 2.0 * PI / sensor.n_rays as f64;
    let r_min = 2.0 * sensor.z_mount;
    let noise = (sensor.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, sensor.range_noise_sigma).expect("sigma is finite"));

    let mut cloud = Vec::new();
    for k in 0..sensor.n_rays {
        let bearing = k as f64 * dtheta;
        let dir = (bearing.cos(), bearing.sin());
        let hit = objects
            .iter()
            .filter_map(|b| ray_footprint_hit((0.0, 0.0), dir, b).map(|t| (t, b)))
            .filter(|(t, _)| *t <= sensor.max_range)
            .min_by(|a, b| a.0.total_cmp(&b.0));

        let free = hit.map_or(sensor.max_range, |(t, _)| t);
        if sensor.background_rate > 0.0 && free > r_min {
            let area = dtheta * (free * free - r_min * r_min) / 2.0;
            let lambda = sensor.background_rate * area;
            let count = Poisson::new(lambda).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
            for _ in 0..count {
                let u: f64 = rng.random();
                let r = (r_min * r_min + u * (free * free - r_min * r_min)).sqrt();
                let intensity = rng.random_range(0.0..0.2);
                cloud.push(Point3::new(r * dir.0, r * dir.1, 0.0, intensity));
            }
        }

        if let Some((t, b)) = hit {
            let dr = match &noise {
                Some(n) => {
                    let sigma = sensor.range_noise_sigma;
                    n.sample(&mut rng).clamp(-3.0 * sigma, 3.0 * sigma)
                }
                None => 0.0,
            };
            let r = (t + dr).max(0.0);
            let z = rng.random_range(b.z_min()..=b.z_max());
            let intensity = rng.random_range(0.2..0.9);
            cloud.push(Point3::new(r * dir.0, r * dir.1, z, intensity));
        }
    }
    Ok(cloud)
}

/// Adds independent zero-mean Gaussian noise to x, y and yaw. Draws three
/// standard normals regardless of the sigmas, so streams stay aligned across
/// noise levels.
pub fn perturb_pose<R: Rng + ?Sized>(p: &PlanarPose, sigma_xy: f64, sigma_yaw: f64, rng: &mut R) -> PlanarPose {
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    let zt: f64 = StandardNormal.sample(rng);
    PlanarPose::new(p.x + sigma_xy * zx, p.y + sigma_xy * zy, p.yaw + sigma_yaw * zt)
}

/// Boxes and points of a received message, re-expressed in the ego frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReceivedContents {
    pub boxes: Vec<OrientedBox3>,
    pub points: PointCloud,
}

/// Moves message contents from the sender's (believed) frame into the ego
/// frame. Records that do not form a valid box are dropped.
pub fn express_message_in_ego(
    boxes: &[BoxRecord],
    points: &[PointRecord],
    sender: &PlanarPose,
    ego: &PlanarPose,
) -> ReceivedContents {
    let boxes = boxes
        .iter()
        .filter_map(|r| OrientedBox3::from_params(r.to_f64()).ok())
        .map(|b| b.transformed(sender, ego))
        .collect();
    let points = points.iter().map(|r| transform_to_frame(r.to_point(), sender, ego)).collect();
    ReceivedContents { boxes, points }
}
