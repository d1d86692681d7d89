//! Bandwidth-aware hybrid collaboration for multi-agent 3D detection.
//!
//! Agents share a mix of compact box messages and raw LiDAR points under a
//! per-link float budget. Boxes go first, most confident first; leftover
//! budget buys points, sampled towards detections the sender is unsure of.
//! Receivers re-detect on the merged cloud and then suppress duplicate
//! boxes.
//!
//! The crate ships a synthetic world, a ray-cast LiDAR and a noisy-oracle
//! detector so the whole pipeline can be swept over budgets on a laptop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod evaluation;
pub mod experiment;
pub mod fusion;
pub mod geometry;
pub mod messaging;
pub mod scenario;
pub mod seeds;
pub mod strategies;

pub use detector::{detect, Detection, DetectionSet, DetectorProfile};
pub use evaluation::{evaluate, ApResult, VolumeReport};
pub use experiment::{ExperimentConfig, ReplayDump};
pub use geometry::{OrientedBox3, PlanarPose, Point3, PointCloud};
pub use messaging::{Budget, HybridMessage, PackerConfig};
pub use scenario::{Scenario, SensorConfig, WorldConfig};
pub use strategies::{run_strategy, run_trial_matrix, StrategyId, SweepResult, Trial};
