//! Aggregate metrics file shared by `simulate` and `report`.

use mobman_core::executor::LatencyConfig;
use mobman_core::sim::ConditionSummary;
use serde::{Deserialize, Serialize};

pub const AGGREGATE: &str = "aggregate.json";
pub const EPISODES: &str = "episodes.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub latency: LatencyConfig,
    pub trials: usize,
    pub seed: u64,
    pub conditions: Vec<ConditionSummary>,
}
