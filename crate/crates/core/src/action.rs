//! The 11-D action layout and the kinematic state it increments.
//!
//! ```text
//! [dx, dy, dtheta | dpx, dpy, dpz, dqw, dqx, dqy, dqz | g]
//!   base (3)        arm (7)                             grip (1)
//! ```
//!
//! `(dx, dy)` is expressed in the base frame at the start of the step, the arm
//! increment is taken on the chest-relative hand pose (`p' = p + dp`,
//! `q' = dq ⊗ q` with `dq_w >= 0`), and `g` is the absolute aperture after the
//! step.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    add3, quat_increment_apply, quat_increment_between, sub3, wrap_angle, Pose2, Pose3, UnitQuat, Vec3,
};

pub const ACTION_DIM: usize = 11;
pub const BASE: std::ops::Range<usize> = 0..3;
pub const ARM_POS: std::ops::Range<usize> = 3..6;
pub const ARM_ROT: std::ops::Range<usize> = 6..10;
pub const GRIP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub [f64; ACTION_DIM]);

impl Action {
    /// No motion, identity rotation increment, given aperture.
    pub fn hold(grip: f64) -> Self {
        let mut a = [0.0; ACTION_DIM];
        a[ARM_ROT.start] = 1.0;
        a[GRIP] = grip;
        Action(a)
    }

    pub fn base_delta(&self) -> (f64, f64, f64) {
        (self.0[0], self.0[1], self.0[2])
    }

    pub fn dp(&self) -> Vec3 {
        [self.0[3], self.0[4], self.0[5]]
    }

    /// Rotation increment, renormalized and moved to `w >= 0`.
    pub fn dq(&self) -> UnitQuat {
        UnitQuat::normalized(self.0[6], self.0[7], self.0[8], self.0[9]).canonical()
    }

    pub fn grip(&self) -> f64 {
        self.0[GRIP]
    }

    /// Rewrites the quaternion block as a canonical unit quaternion.
    pub fn canonicalize(&mut self) {
        let q = self.dq().to_array();
        self.0[ARM_ROT].copy_from_slice(&q);
    }
}

/// Base pose, chest-relative hand pose and gripper aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinState {
    pub base: Pose2,
    pub hand: Pose3,
    pub grip: f64,
}

impl Default for KinState {
    fn default() -> Self {
        Self {
            base: Pose2::identity(),
            hand: Pose3::identity(),
            grip: 0.0,
        }
    }
}

impl KinState {
    /// Applies one action kinematically (no lag, no limits).
    pub fn apply(&self, a: &Action) -> KinState {
        let (dx, dy, dth) = a.base_delta();
        let (s, c) = self.base.theta.sin_cos();
        let base = Pose2::new(
            self.base.x + c * dx - s * dy,
            self.base.y + s * dx + c * dy,
            self.base.theta + dth,
        );
        let hand = Pose3::new(
            quat_increment_apply(&self.hand.rotation, &a.dq()),
            add3(self.hand.translation, a.dp()),
        );
        KinState {
            base,
            hand,
            grip: a.grip(),
        }
    }

    /// The action that takes `self` to `next` exactly.
    pub fn action_to(&self, next: &KinState) -> Action {
        let (dx, dy) = self.base.to_local(next.base.x - self.base.x, next.base.y - self.base.y);
        let dth = wrap_angle(next.base.theta - self.base.theta);
        let dp = sub3(next.hand.translation, self.hand.translation);
        let dq = quat_increment_between(&self.hand.rotation, &next.hand.rotation).to_array();
        Action([dx, dy, dth, dp[0], dp[1], dp[2], dq[0], dq[1], dq[2], dq[3], next.grip])
    }

    /// `[x, y, theta, px, py, pz, qw, qx, qy, qz, g]`.
    pub fn to_vec(&self) -> [f64; 11] {
        let h = self.hand.to_array();
        [
            self.base.x,
            self.base.y,
            self.base.theta,
            h[0],
            h[1],
            h[2],
            h[3],
            h[4],
            h[5],
            h[6],
            self.grip,
        ]
    }
}

/// Integrates a sequence of actions; the result starts with `start` and has
/// `actions.len() + 1` states.
pub fn integrate(start: &KinState, actions: &[Action]) -> Vec<KinState> {
    let mut out = Vec::with_capacity(actions.len() + 1);
    out.push(*start);
    let mut s = *start;
    for a in actions {
        s = s.apply(a);
        out.push(s);
    }
    out
}
