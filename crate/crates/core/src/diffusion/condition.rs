//! Flat observation features fed to the denoiser's FiLM head.
//!
//! Layout, in order:
//!
//! | slice            | width | content                                        |
//! |------------------|-------|------------------------------------------------|
//! | state            | 10    | `x, y, theta, p(3), rotvec(q)(3), g`           |
//! | previous action  | 10    | `dx, dy, dtheta, dp(3), rotvec(dq)(3), g`      |
//! | scenario         | F     | caller-supplied features                       |
//! | constant         | 1     | `1.0`                                          |
//!
//! Rotations enter as rotation vectors so the identity state maps to zeros.

use serde::{Deserialize, Serialize};

use crate::action::{Action, KinState};
use crate::geometry::{Pose2, Pose3, UnitQuat};

pub const STATE_WIDTH: usize = 10;
pub const PREV_ACTION_WIDTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionVector(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionLayout {
    pub scenario_dim: usize,
}

impl ConditionLayout {
    pub fn new(scenario_dim: usize) -> Self {
        Self { scenario_dim }
    }

    pub fn dim(&self) -> usize {
        STATE_WIDTH + PREV_ACTION_WIDTH + self.scenario_dim + 1
    }

    /// Inverse of [`obs_to_condition`] up to quaternion sign.
    pub fn split(&self, c: &ConditionVector) -> Option<(KinState, Action, Vec<f64>)> {
        if c.0.len() != self.dim() {
            return None;
        }
        let v = &c.0;
        let state = KinState {
            base: Pose2::new(v[0], v[1], v[2]),
            hand: Pose3::new(UnitQuat::from_rotation_vector([v[6], v[7], v[8]]), [v[3], v[4], v[5]]),
            grip: v[9],
        };
        let a = &v[STATE_WIDTH..STATE_WIDTH + PREV_ACTION_WIDTH];
        let dq = UnitQuat::from_rotation_vector([a[6], a[7], a[8]]).canonical();
        let q = dq.to_array();
        let prev = Action([a[0], a[1], a[2], a[3], a[4], a[5], q[0], q[1], q[2], q[3], a[9]]);
        let f0 = STATE_WIDTH + PREV_ACTION_WIDTH;
        Some((state, prev, v[f0..f0 + self.scenario_dim].to_vec()))
    }
}

/// Deterministic flattening in the documented field order.
pub fn obs_to_condition(state: &KinState, prev: &Action, scenario: &[f64]) -> ConditionVector {
    let mut v = Vec::with_capacity(STATE_WIDTH + PREV_ACTION_WIDTH + scenario.len() + 1);
    let b = state.base;
    v.extend([b.x, b.y, b.theta]);
    v.extend(state.hand.translation);
    v.extend(state.hand.rotation.log());
    v.push(state.grip);
    let (dx, dy, dth) = prev.base_delta();
    v.extend([dx, dy, dth]);
    v.extend(prev.dp());
    v.extend(prev.dq().log());
    v.push(prev.grip());
    v.extend_from_slice(scenario);
    v.push(1.0);
    ConditionVector(v)
}
