//! Latency legs applied to a timestamped event stream on the virtual clock.
//!
//! The executor applies the same three legs internally; this standalone form
//! exists for inspecting and testing the accounting.

use serde::{Deserialize, Serialize};

use crate::executor::LatencyConfig;
use crate::seed::SimRng;

/// Where one emitted event ends up after each leg, integer ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedEvent<T> {
    pub emitted_ms: u64,
    /// When the planner sees it.
    pub visible_ms: u64,
    /// When the planner's answer is back.
    pub arrival_ms: u64,
    /// When the resulting command acts on the plant.
    pub effect_ms: u64,
    pub value: T,
}

pub fn inject_latency<T: Clone>(stream: &[(u64, T)], lat: &LatencyConfig, rng: &mut SimRng) -> Vec<DelayedEvent<T>> {
    stream
        .iter()
        .map(|(t, v)| {
            let visible_ms = t + lat.input_ms;
            let arrival_ms = visible_ms + lat.sample_net_ms(rng);
            DelayedEvent {
                emitted_ms: *t,
                visible_ms,
                arrival_ms,
                effect_ms: arrival_ms + lat.exe_ms,
                value: v.clone(),
            }
        })
        .collect()
}

/// Base travel during the full loop delay at constant speed, m.
pub fn displacement_during(lat: &LatencyConfig, speed: f64) -> f64 {
    speed * lat.total_ms() as f64 / 1000.0
}
