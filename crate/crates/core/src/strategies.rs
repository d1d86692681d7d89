//! Collaboration strategies and the paired-seed trial runner.
//!
//! All strategies share one contract: given a trial (world, clouds and
//! local detections), an ego agent and a per-link budget, produce the ego's
//! final detections and the messages that bought them.
//!
//! Seed scheme, with `h` the SplitMix fold in [`crate::seeds`]:
//! - world: `h(master_seed, trial)`, shared by every strategy and budget,
//! - local detection and pose noise: `h(world_seed, agent, purpose)`,
//! - point sampling: `h(master_seed, budget, trial, agent)`.
//!
//! Sampling streams deliberately ignore the strategy so that strategies
//! which differ only in their point weights are compared on common random
//! numbers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{detect, DetectionSet, DetectorProfile};
use crate::evaluation::{communication_volume, evaluate, ApResult, VolumeReport};
use crate::fusion::{fuse_early, fuse_late, FusionConfig};
use crate::geometry::{OrientedBox3, PlanarPose, PointCloud};
use crate::messaging::{
    deserialize, pack_box_message, pack_hybrid, select_boxes, serialize, weighted_sample, Budget, HybridMessage,
    PackerConfig, PointPackerMode, PointWeighting, BOX_FLOATS, POINT_FLOATS,
};
use crate::scenario::{
    express_message_in_ego, generate_world, perturb_pose, simulate_lidar, Scenario, ScenarioError, SensorConfig,
    WorldConfig,
};
use crate::seeds::{derive_seed, rng_for, tag};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("wire error: {0}")]
    Wire(#[from] crate::messaging::WireError),
    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    NoCollab,
    LateAll,
    EarlyRandom,
    HeuristicSwitch,
    Hycomm,
    HycommPointOnly,
    PointOnlyUniform,
    HycommNoExpand,
    HycommNoReweight,
}

impl StrategyId {
    pub const ALL: [StrategyId; 9] = [
        StrategyId::NoCollab,
        StrategyId::LateAll,
        StrategyId::EarlyRandom,
        StrategyId::HeuristicSwitch,
        StrategyId::Hycomm,
        StrategyId::HycommPointOnly,
        StrategyId::PointOnlyUniform,
        StrategyId::HycommNoExpand,
        StrategyId::HycommNoReweight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::NoCollab => "no_collab",
            StrategyId::LateAll => "late_all",
            StrategyId::EarlyRandom => "early_random",
            StrategyId::HeuristicSwitch => "heuristic_switch",
            StrategyId::Hycomm => "hycomm",
            StrategyId::HycommPointOnly => "hycomm_point_only",
            StrategyId::PointOnlyUniform => "point_only_uniform",
            StrategyId::HycommNoExpand => "hycomm_no_expand",
            StrategyId::HycommNoReweight => "hycomm_no_reweight",
        }
    }

    /// Packer mode for the hybrid-pipeline strategies.
    fn packer_mode(self) -> Option<PointPackerMode> {
        let full = PointPackerMode::default();
        match self {
            StrategyId::Hycomm => Some(full),
            StrategyId::HycommPointOnly => Some(PointPackerMode { points_only: true, ..full }),
            StrategyId::PointOnlyUniform => {
                Some(PointPackerMode { points_only: true, weighting: PointWeighting::Uniform, ..full })
            }
            StrategyId::HycommNoExpand => Some(PointPackerMode { expand: false, ..full }),
            StrategyId::HycommNoReweight => Some(PointPackerMode { weighting: PointWeighting::FlatInside, ..full }),
            _ => None,
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

/// Collaborator pose noise; the ego pose is always exact.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseNoise {
    pub sigma_xy: f64,
    pub sigma_yaw: f64,
}

impl PoseNoise {
    pub fn shared(sigma: f64) -> Self {
        PoseNoise { sigma_xy: sigma, sigma_yaw: sigma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    pub packer: PackerConfig,
    pub fusion: FusionConfig,
    /// Budget (floats) from which the heuristic switch goes early.
    pub switch_threshold_floats: u64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            packer: PackerConfig::default(),
            fusion: FusionConfig::default(),
            switch_threshold_floats: 500 * POINT_FLOATS,
        }
    }
}

/// Everything about one world that does not depend on the strategy.
#[derive(Debug, Clone)]
pub struct Trial {
    pub scenario: Scenario,
    pub profiles: Vec<DetectorProfile>,
    pub clouds: Vec<PointCloud>,
    /// Ground truth per agent frame.
    pub objects: Vec<Vec<OrientedBox3>>,
    pub local: Vec<DetectionSet>,
}

impl Trial {
    /// Simulates every agent's sweep and local detections. Agent `i` uses
    /// `profiles[i % profiles.len()]`.
    pub fn new(scenario: Scenario, profiles: &[DetectorProfile]) -> Result<Self, StrategyError> {
        if profiles.is_empty() {
            return Err(StrategyError::InvalidInput("at least one detector profile is required".into()));
        }
        let n = scenario.agents.len();
        let profiles: Vec<DetectorProfile> = (0..n).map(|i| profiles[i % profiles.len()].clone()).collect();
        let mut clouds = Vec::with_capacity(n);
        let mut objects = Vec::with_capacity(n);
        let mut local = Vec::with_capacity(n);
        for (a, profile) in profiles.iter().enumerate() {
            let cloud = simulate_lidar(&scenario, a)?;
            let gt = scenario.objects_in_frame(a)?;
            local.push(detect(&cloud, &gt, profile, &mut detect_rng(&scenario, a)));
            clouds.push(cloud);
            objects.push(gt);
        }
        Ok(Trial { scenario, profiles, clouds, objects, local })
    }

    pub fn generate(world: &WorldConfig, sensor: &SensorConfig, profiles: &[DetectorProfile]) -> Result<Self, StrategyError> {
        Trial::new(generate_world(world, sensor)?, profiles)
    }

    pub fn pose(&self, agent: usize) -> PlanarPose {
        self.scenario.agents[agent].pose
    }

    /// The pose a collaborator believes it has (and transmits).
    pub fn believed_pose(&self, agent: usize, noise: PoseNoise) -> PlanarPose {
        let mut rng = rng_for(&[self.scenario.seed, tag::POSE, agent as u64]);
        perturb_pose(&self.pose(agent), noise.sigma_xy, noise.sigma_yaw, &mut rng)
    }
}

fn detect_rng(scenario: &Scenario, agent: usize) -> crate::seeds::SimRng {
    rng_for(&[scenario.seed, tag::DETECT, agent as u64])
}

/// The message one collaborator sends under a strategy.
pub fn sender_message(
    id: StrategyId,
    trial: &Trial,
    sender: usize,
    budget: Budget,
    sender_pose: &PlanarPose,
    params: &StrategyParams,
    sample_seed: u64,
) -> HybridMessage {
    let dets = &trial.local[sender];
    let cloud = &trial.clouds[sender];
    let mut rng = rng_for(&[sample_seed, tag::SAMPLE, sender as u64]);
    match id {
        StrategyId::NoCollab => HybridMessage::empty(sender_pose),
        StrategyId::LateAll => late_all_message(dets, budget, sender_pose),
        StrategyId::EarlyRandom => early_random_message(cloud, budget, sender_pose, &mut rng),
        StrategyId::HeuristicSwitch => {
            if budget.floats() >= params.switch_threshold_floats {
                early_random_message(cloud, budget, sender_pose, &mut rng)
            } else {
                late_all_message(dets, budget, sender_pose)
            }
        }
        _ => {
            let mode = id.packer_mode().expect("hybrid strategy has a packer mode");
            pack_hybrid(dets, cloud, budget, &params.packer, mode, sender_pose, &mut rng)
        }
    }
}

/// All-or-nothing: every box when they all fit, else nothing.
fn late_all_message(dets: &DetectionSet, budget: Budget, pose: &PlanarPose) -> HybridMessage {
    let mut msg = HybridMessage::empty(pose);
    if budget.floats() >= BOX_FLOATS * dets.len() as u64 {
        msg.boxes = pack_box_message(dets, &select_boxes(&dets.confidences(), dets.len()));
    }
    msg
}

fn early_random_message<R: rand::Rng + ?Sized>(cloud: &PointCloud, budget: Budget, pose: &PlanarPose, rng: &mut R) -> HybridMessage {
    let n = (budget.floats() / POINT_FLOATS) as usize;
    let mut msg = HybridMessage::empty(pose);
    if n > 0 {
        msg.points = weighted_sample(cloud, &vec![1.0; cloud.len()], n, rng);
    }
    msg
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub detections: DetectionSet,
    /// `(sender, message)` per collaborator link, in neighbor order.
    pub messages: Vec<(usize, HybridMessage)>,
    pub volume: VolumeReport,
}

/// Runs one strategy for `ego`: every neighbor packs a message under the
/// same per-link budget, the ego decodes and aligns them, then fuses early
/// and late.
pub fn run_strategy(
    id: StrategyId,
    trial: &Trial,
    ego: usize,
    budget: Budget,
    noise: PoseNoise,
    params: &StrategyParams,
    sample_seed: u64,
) -> Result<StrategyOutcome, StrategyError> {
    trial.scenario.agent(ego)?;
    if id == StrategyId::NoCollab {
        return Ok(StrategyOutcome {
            detections: trial.local[ego].clone(),
            messages: Vec::new(),
            volume: VolumeReport::from_bytes(0),
        });
    }

    let ego_pose = trial.pose(ego);
    let mut messages = Vec::new();
    let mut points = Vec::new();
    let mut boxes = Vec::new();
    for &j in &trial.scenario.neighbors[ego] {
        let believed = trial.believed_pose(j, noise);
        let msg = sender_message(id, trial, j, budget, &believed, params, sample_seed);
        let received = deserialize(&serialize(&msg)?)?;
        let aligned = express_message_in_ego(&received.boxes, &received.points, &received.sender_pose(), &ego_pose);
        points.push(aligned.points);
        boxes.extend(aligned.boxes);
        messages.push((j, msg));
    }

    let early = fuse_early(
        &trial.clouds[ego],
        &points,
        &trial.objects[ego],
        &trial.profiles[ego],
        &mut detect_rng(&trial.scenario, ego),
    );
    let detections = fuse_late(&early, &boxes, &params.fusion);
    let volume = communication_volume(messages.iter().map(|(_, m)| m));
    Ok(StrategyOutcome { detections, messages, volume })
}

/// Inputs for a sweep over strategies and budgets.
#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub world: WorldConfig,
    pub sensor: SensorConfig,
    pub profiles: Vec<DetectorProfile>,
    pub params: StrategyParams,
    pub strategies: Vec<StrategyId>,
    pub budgets: Vec<u64>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub noise: PoseNoise,
    /// Agent whose detections are scored.
    pub ego: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub strategy: StrategyId,
    pub budget_floats: u64,
    pub ap: ApResult,
    pub volume: VolumeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: StrategyId,
    pub budget_floats: u64,
    pub volume_log2_bytes: f64,
    pub ap_mean: [f64; 3],
    pub ap_sd: [f64; 3],
    pub n_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Sorted by (configured strategy order, budget, trial).
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    /// Per-trial values of one metric for a (strategy, budget) cell.
    pub fn series(&self, strategy: StrategyId, budget: u64, metric: impl Fn(&ApResult) -> f64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.strategy == strategy && r.budget_floats == budget)
            .map(|r| metric(&r.ap))
            .collect()
    }

    pub fn row(&self, strategy: StrategyId, budget: u64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.budget_floats == budget)
    }
}

pub fn world_seed(master_seed: u64, trial: usize) -> u64 {
    derive_seed(&[master_seed, tag::WORLD, trial as u64])
}

pub fn sample_seed(master_seed: u64, budget: u64, trial: usize) -> u64 {
    derive_seed(&[master_seed, tag::SAMPLE, budget, trial as u64])
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

fn run_one_trial(spec: &MatrixSpec, t: usize) -> Result<Vec<TrialRecord>, StrategyError> {
    let world = WorldConfig { seed: world_seed(spec.master_seed, t), ..spec.world.clone() };
    let trial = Trial::generate(&world, &spec.sensor, &spec.profiles)?;
    let gts = &trial.objects[spec.ego];
    let mut out = Vec::with_capacity(spec.strategies.len() * spec.budgets.len());
    for &strategy in &spec.strategies {
        for &budget in &spec.budgets {
            let outcome = run_strategy(
                strategy,
                &trial,
                spec.ego,
                Budget(budget),
                spec.noise,
                &spec.params,
                sample_seed(spec.master_seed, budget, t),
            )?;
            out.push(TrialRecord {
                trial: t,
                strategy,
                budget_floats: budget,
                ap: evaluate(&outcome.detections, gts),
                volume: outcome.volume,
            });
        }
    }
    Ok(out)
}

/// Runs every (strategy, budget) pair on `n_trials` paired worlds and
/// aggregates per cell. Trials run on the current rayon pool; results do
/// not depend on scheduling.
pub fn run_trial_matrix(spec: &MatrixSpec) -> Result<SweepResult, StrategyError> {
    if spec.n_trials == 0 {
        return Err(StrategyError::InvalidInput("n_trials must be at least 1".into()));
    }
    let per_trial: Vec<Vec<TrialRecord>> =
        (0..spec.n_trials).into_par_iter().map(|t| run_one_trial(spec, t)).collect::<Result<_, _>>()?;
    let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let strategy_pos = |s: StrategyId| spec.strategies.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (strategy_pos(r.strategy), r.budget_floats, r.trial));

    let mut rows = Vec::new();
    for &strategy in &spec.strategies {
        for &budget in &spec.budgets {
            let cell: Vec<&TrialRecord> =
                records.iter().filter(|r| r.strategy == strategy && r.budget_floats == budget).collect();
            let stats: [(f64, f64); 3] =
                std::array::from_fn(|k| mean_sd(&cell.iter().map(|r| r.ap.as_array()[k]).collect::<Vec<_>>()));
            let vol: Vec<f64> = cell.iter().map(|r| r.volume.log2_bytes).collect();
            rows.push(SweepRow {
                strategy,
                budget_floats: budget,
                volume_log2_bytes: mean_sd(&vol).0,
                ap_mean: stats.map(|s| s.0),
                ap_sd: stats.map(|s| s.1),
                n_trials: cell.len(),
                seed: spec.master_seed,
            });
        }
    }
    Ok(SweepResult { rows, records })
}
