//! Demonstration processing and latency-aware execution for mobile
//! manipulators.
//!
//! - [`geometry`]: SE(3)/SE(2)/SO(3) pose algebra.
//! - [`anchoring`]: unify per-sensor odometry frames through a static board.
//! - [`pipeline`]: raw streams to the chest-relative 10 Hz dataset and its
//!   11-D action labels.
//! - [`diffusion`]: noise schedule, FiLM-conditioned toy denoiser, DDIM.
//! - [`executor`]: receding-horizon chunk dispatch with state matching.
//! - [`sim`]: deterministic differential-drive plant, scripted expert and
//!   scenario metrics.

pub mod action;
pub mod anchoring;
pub mod diffusion;
pub mod executor;
pub mod geometry;
pub mod jsonl;
pub mod pipeline;
pub mod seed;
pub mod sim;

pub use geometry::{Pose2, Pose3, Timestamped, UnitQuat};
