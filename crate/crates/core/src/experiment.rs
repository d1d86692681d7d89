//! Experiment configuration, sweep reports (CSV and SVG) and replay dumps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{heterogeneous_profiles, DetectionSet, DetectorProfile};
use crate::evaluation::{evaluate, ApResult, VolumeReport};
use crate::fusion::FusionConfig;
use crate::messaging::{serialize, Budget, PackerConfig, HEADER_BYTES};
use crate::scenario::{Scenario, SensorConfig, WorldConfig};
use crate::strategies::{
    run_strategy, MatrixSpec, PoseNoise, StrategyError, StrategyId, StrategyParams, SweepResult, Trial,
};

pub const CSV_HEADER: &str = "strategy,budget_floats,volume_log2_bytes,ap30,ap50,ap70,ap30_sd,ap50_sd,ap70_sd,n_trials,seed";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One JSON document that fully determines an experiment. Every field has
/// a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub sensor: SensorConfig,
    /// Cycled across agents by index.
    pub profiles: Vec<DetectorProfile>,
    /// With a single profile listed, replace it with one preset per agent.
    pub hetero: bool,
    pub packer: PackerConfig,
    pub fusion: FusionConfig,
    pub switch_threshold_floats: u64,
    pub strategies: Vec<StrategyId>,
    /// Per-link budgets in 32-bit values, strictly increasing.
    pub budgets_floats: Vec<u64>,
    pub n_trials: usize,
    /// Collaborator pose noise std, applied to x, y (m) and yaw (rad).
    pub pose_sigma: f64,
    /// Overrides the yaw std when set.
    pub pose_sigma_yaw: Option<f64>,
    pub master_seed: u64,
    pub ego: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            sensor: SensorConfig::default(),
            profiles: vec![DetectorProfile::default()],
            hetero: false,
            packer: PackerConfig::default(),
            fusion: FusionConfig::default(),
            switch_threshold_floats: StrategyParams::default().switch_threshold_floats,
            strategies: vec![
                StrategyId::NoCollab,
                StrategyId::LateAll,
                StrategyId::EarlyRandom,
                StrategyId::HeuristicSwitch,
                StrategyId::Hycomm,
            ],
            budgets_floats: vec![50, 200, 800, 3200, 12800],
            n_trials: 200,
            pose_sigma: 0.0,
            pose_sigma_yaw: None,
            master_seed: 2024,
            ego: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.world.validate().map_err(|e| invalid(e.to_string()))?;
        self.sensor.validate().map_err(|e| invalid(e.to_string()))?;
        if self.profiles.is_empty() {
            return Err(invalid("profiles must list at least one detector profile".into()));
        }
        for p in &self.profiles {
            p.validate().map_err(invalid)?;
        }
        self.packer.validate().map_err(invalid)?;
        self.fusion.validate().map_err(invalid)?;
        if self.strategies.is_empty() {
            return Err(invalid("strategies must not be empty".into()));
        }
        if self.budgets_floats.is_empty() || !self.budgets_floats.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("budgets_floats must be non-empty and strictly increasing".into()));
        }
        if self.n_trials < 1 {
            return Err(invalid("n_trials must be at least 1".into()));
        }
        if !(self.pose_sigma >= 0.0) || self.pose_sigma_yaw.is_some_and(|s| !(s >= 0.0)) {
            return Err(invalid("pose sigmas must be >= 0".into()));
        }
        if self.ego >= self.world.n_agents {
            return Err(invalid(format!("ego {} is not one of the {} agents", self.ego, self.world.n_agents)));
        }
        Ok(())
    }

    /// Profiles per agent slot after applying the `hetero` flag.
    pub fn resolved_profiles(&self) -> Vec<DetectorProfile> {
        if self.hetero && self.profiles.len() == 1 {
            heterogeneous_profiles(self.world.n_agents)
        } else {
            self.profiles.clone()
        }
    }

    pub fn pose_noise(&self) -> PoseNoise {
        PoseNoise { sigma_xy: self.pose_sigma, sigma_yaw: self.pose_sigma_yaw.unwrap_or(self.pose_sigma) }
    }

    pub fn params(&self) -> StrategyParams {
        StrategyParams { packer: self.packer, fusion: self.fusion, switch_threshold_floats: self.switch_threshold_floats }
    }

    pub fn matrix_spec(&self) -> MatrixSpec {
        MatrixSpec {
            world: self.world.clone(),
            sensor: self.sensor,
            profiles: self.resolved_profiles(),
            params: self.params(),
            strategies: self.strategies.clone(),
            budgets: self.budgets_floats.clone(),
            n_trials: self.n_trials,
            master_seed: self.master_seed,
            noise: self.pose_noise(),
            ego: self.ego,
        }
    }
}

/// Sweep rows as CSV, one row per (strategy, budget) in config order.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.strategy,
            r.budget_floats,
            r.volume_log2_bytes,
            r.ap_mean[0],
            r.ap_mean[1],
            r.ap_mean[2],
            r.ap_sd[0],
            r.ap_sd[1],
            r.ap_sd[2],
            r.n_trials,
            r.seed
        );
    }
    out
}

const PALETTE: [&str; 9] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"];

/// AP50 against log2 payload bytes, one polyline per strategy.
pub fn sweep_svg(result: &SweepResult) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 190.0, 30.0, 60.0);
    let x_max = result.rows.iter().map(|r| r.volume_log2_bytes).fold(1.0f64, f64::max).ceil();
    let px = |x: f64| left + (w - left - right) * x / x_max;
    let py = |y: f64| top + (h - top - bottom) * (1.0 - y);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, py(0.0), px(x_max), py(0.0));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{left}" y2="{}" stroke="black"/>"#, py(0.0), py(1.0));
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y:.1}</text>"#, left - 6.0, py(y) + 4.0);
    }
    let step = (x_max / 8.0).ceil().max(1.0);
    let mut x = 0.0;
    while x <= x_max {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, px(x), py(0.0) + 18.0);
        x += step;
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">payload per ego (log2 bytes)</text>"#, px(x_max / 2.0), h - 15.0);
    let _ = writeln!(s, r#"<text x="18" y="{}" transform="rotate(-90 18 {})" text-anchor="middle">AP@0.5</text>"#, py(0.5), py(0.5));

    let mut strategies: Vec<StrategyId> = Vec::new();
    for r in &result.rows {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    for (k, strategy) in strategies.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = result
            .rows
            .iter()
            .filter(|r| r.strategy == *strategy)
            .map(|r| format!("{:.2},{:.2}", px(r.volume_log2_bytes), py(r.ap_mean[1])))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for p in &pts {
            let (cx, cy) = p.split_once(',').expect("formatted as x,y");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 18.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right + 15.0, w - right + 40.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{strategy}</text>"#, w - right + 46.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageDump {
    pub sender: usize,
    pub n_boxes: usize,
    pub n_points: usize,
    pub payload_bytes: u64,
    pub frame_bytes: usize,
    pub message: crate::messaging::HybridMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayDump {
    pub strategy: StrategyId,
    pub budget_floats: u64,
    pub seed: u64,
    pub ego: usize,
    pub before: DetectionSet,
    pub after: DetectionSet,
    pub messages: Vec<MessageDump>,
    pub volume: VolumeReport,
    pub ap_before: ApResult,
    pub ap_after: ApResult,
}

/// Replays one strategy on a fixed scenario. `seed` drives point sampling;
/// everything else follows the scenario's own seed.
pub fn replay(
    scenario: Scenario,
    cfg: &ExperimentConfig,
    strategy: StrategyId,
    budget: u64,
    seed: u64,
) -> Result<ReplayDump, StrategyError> {
    let ego = cfg.ego;
    let trial = Trial::new(scenario, &cfg.resolved_profiles())?;
    let outcome = run_strategy(strategy, &trial, ego, Budget(budget), cfg.pose_noise(), &cfg.params(), seed)?;
    let gts = &trial.objects[ego];
    let messages = outcome
        .messages
        .iter()
        .map(|(sender, m)| {
            Ok(MessageDump {
                sender: *sender,
                n_boxes: m.boxes.len(),
                n_points: m.points.len(),
                payload_bytes: m.payload_bytes(),
                frame_bytes: serialize(m)?.len(),
                message: m.clone(),
            })
        })
        .collect::<Result<Vec<_>, StrategyError>>()?;
    debug_assert!(messages.iter().all(|m| m.frame_bytes == HEADER_BYTES + m.payload_bytes as usize));
    Ok(ReplayDump {
        strategy,
        budget_floats: budget,
        seed,
        ego,
        ap_before: evaluate(&trial.local[ego], gts),
        ap_after: evaluate(&outcome.detections, gts),
        before: trial.local[ego].clone(),
        after: outcome.detections,
        messages,
        volume: outcome.volume,
    })
}
