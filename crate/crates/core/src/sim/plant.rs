//! Differential-drive base with first-order motor lag plus a pose-tracked
//! arm and a rate-limited gripper.

use serde::{Deserialize, Serialize};

use crate::action::KinState;
use crate::executor::{Command, Plant};
use crate::geometry::{add3, scale3, slerp, sub3, Pose2, Pose3};
use crate::pipeline::filter::{LATERAL_CLIP, LATERAL_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Base motor time constant, s. Zero gives a kinematic base.
    pub tau_base: f64,
    /// Arm pose tracking time constant, s.
    pub tau_arm: f64,
    pub lateral_clip: f64,
    pub lateral_tau: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Gripper slew rate, aperture units per second.
    pub grip_rate: f64,
    pub substep_ms: u64,
    /// Height of the chest camera above the floor, m.
    pub chest_height: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            tau_base: 0.15,
            tau_arm: 0.08,
            lateral_clip: LATERAL_CLIP,
            lateral_tau: LATERAL_TAU,
            v_max: 0.5,
            omega_max: 1.5,
            grip_rate: 2.0,
            substep_ms: 10,
            chest_height: 1.2,
        }
    }
}

impl PlantConfig {
    /// No lag anywhere; commands are followed exactly.
    pub fn kinematic() -> Self {
        Self {
            tau_base: 0.0,
            tau_arm: 0.0,
            lateral_tau: 0.0,
            grip_rate: f64::INFINITY,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// True world pose.
    pub base: Pose2,
    pub v: f64,
    pub omega: f64,
    /// Output of the lateral saturation filter, m/s.
    pub lateral: f64,
    pub hand_rel: Pose3,
    pub grip: f64,
    /// Seconds since start.
    pub clock: f64,
}

impl PlantState {
    pub fn at_rest(base: Pose2, hand_rel: Pose3, grip: f64) -> Self {
        Self {
            base,
            v: 0.0,
            omega: 0.0,
            lateral: 0.0,
            hand_rel,
            grip,
            clock: 0.0,
        }
    }

    /// Chest camera pose in the world: the base lifted to chest height.
    pub fn chest_world(&self, cfg: &PlantConfig) -> Pose3 {
        Pose3::from_pose2(&self.base, cfg.chest_height)
    }

    pub fn hand_world(&self, cfg: &PlantConfig) -> Pose3 {
        self.chest_world(cfg).compose(&self.hand_rel)
    }
}

/// Exact first-order response over `dt`: `(end value, mean value)`.
fn lag(x: f64, target: f64, tau: f64, dt: f64) -> (f64, f64) {
    if tau <= 0.0 || dt <= 0.0 {
        return (target, target);
    }
    let a = (-dt / tau).exp();
    (target + (x - target) * a, target + (x - target) * tau / dt * (1.0 - a))
}

/// Planar displacement in the start frame for constant `(v, omega)` over
/// `dt`, as `(dx, dy, dtheta)`.
pub fn arc(v: f64, omega: f64, dt: f64) -> (f64, f64, f64) {
    let dth = omega * dt;
    if dth.abs() < 1e-9 {
        // second-order expansion keeps the near-straight case smooth
        return (v * dt * (1.0 - dth * dth / 6.0), v * dt * dth / 2.0, dth);
    }
    (v * dth.sin() / omega, v * (1.0 - dth.cos()) / omega, dth)
}

/// One integration step with command held constant.
pub fn step_plant(s: &PlantState, cmd: &Command, dt: f64, cfg: &PlantConfig) -> PlantState {
    let v_cmd = cmd.base.v.clamp(-cfg.v_max, cfg.v_max);
    let w_cmd = cmd.base.omega.clamp(-cfg.omega_max, cfg.omega_max);
    let (v, v_avg) = lag(s.v, v_cmd, cfg.tau_base, dt);
    let (omega, w_avg) = lag(s.omega, w_cmd, cfg.tau_base, dt);
    let lat_in = cmd.lateral.clamp(-cfg.lateral_clip, cfg.lateral_clip);
    let (lateral, l_avg) = lag(s.lateral, lat_in, cfg.lateral_tau, dt);
    let (dx, dy, dth) = arc(v_avg, w_avg, dt);
    let (sn, cs) = s.base.theta.sin_cos();
    let mid = s.base.theta + 0.5 * dth;
    let ly = l_avg * dt;
    let base = Pose2::new(
        s.base.x + cs * dx - sn * dy - mid.sin() * ly,
        s.base.y + sn * dx + cs * dy + mid.cos() * ly,
        s.base.theta + dth,
    );
    let k = if cfg.tau_arm > 0.0 {
        1.0 - (-dt / cfg.tau_arm).exp()
    } else {
        1.0
    };
    let hand_rel = if k >= 1.0 {
        cmd.hand_target
    } else {
        let d = sub3(cmd.hand_target.translation, s.hand_rel.translation);
        Pose3::new(
            slerp(&s.hand_rel.rotation, &cmd.hand_target.rotation, k),
            add3(s.hand_rel.translation, scale3(d, k)),
        )
    };
    let max_dg = cfg.grip_rate * dt;
    let grip = s.grip + (cmd.grip_target.clamp(0.0, 1.0) - s.grip).clamp(-max_dg, max_dg);
    PlantState {
        base,
        v,
        omega,
        lateral,
        hand_rel,
        grip,
        clock: s.clock + dt,
    }
}

/// Plant with a command queue, an odometry frame anchored at the start pose
/// and acceleration bookkeeping.
#[derive(Debug, Clone)]
pub struct SimPlant {
    pub cfg: PlantConfig,
    pub state: PlantState,
    /// Odometry origin in the world.
    pub start: Pose2,
    pub clock_ms: u64,
    active: Command,
    queue: Vec<(u64, u64, Command)>,
    seq: u64,
    last_grid_v: f64,
    /// Largest |forward acceleration| over a substep interval since the last
    /// [`SimPlant::take_peak_accel`].
    peak_accel: f64,
    /// `(scheduled effect ms, applied at ms)` of every command.
    pub applied: Vec<(u64, u64)>,
}

impl SimPlant {
    pub fn new(cfg: PlantConfig, initial: PlantState) -> Self {
        Self {
            cfg,
            start: initial.base,
            active: Command::hold(&KinState {
                base: Pose2::identity(),
                hand: initial.hand_rel,
                grip: initial.grip,
            }),
            state: initial,
            clock_ms: 0,
            queue: Vec::new(),
            seq: 0,
            last_grid_v: initial.v,
            peak_accel: 0.0,
            applied: Vec::new(),
        }
    }

    pub fn take_peak_accel(&mut self) -> f64 {
        std::mem::take(&mut self.peak_accel)
    }

    fn apply_due(&mut self) {
        while let Some(pos) = self
            .queue
            .iter()
            .enumerate()
            .filter(|(_, e)| e.0 <= self.clock_ms)
            .min_by_key(|(_, e)| (e.0, e.1))
            .map(|(i, _)| i)
        {
            let (effect, _, cmd) = self.queue.remove(pos);
            self.active = cmd;
            self.applied.push((effect, self.clock_ms));
        }
    }
}

impl Plant for SimPlant {
    fn observe(&self) -> KinState {
        KinState {
            base: self.start.inverse().compose(&self.state.base),
            hand: self.state.hand_rel,
            grip: self.state.grip,
        }
    }

    fn forward_velocity(&self) -> f64 {
        self.state.v
    }

    fn submit(&mut self, cmd: Command, effect_ms: u64) {
        self.queue.push((effect_ms, self.seq, cmd));
        self.seq += 1;
        self.apply_due();
    }

    fn advance(&mut self, until_ms: u64) {
        let sub = self.cfg.substep_ms.max(1);
        while self.clock_ms < until_ms {
            self.apply_due();
            let grid = (self.clock_ms / sub + 1) * sub;
            let next_effect = self
                .queue
                .iter()
                .map(|e| e.0)
                .filter(|t| *t > self.clock_ms)
                .min()
                .unwrap_or(u64::MAX);
            let next = until_ms.min(grid).min(next_effect);
            let dt = (next - self.clock_ms) as f64 / 1000.0;
            self.state = step_plant(&self.state, &self.active, dt, &self.cfg);
            self.clock_ms = next;
            if self.clock_ms.is_multiple_of(sub) {
                let a = (self.state.v - self.last_grid_v) / (sub as f64 / 1000.0);
                self.peak_accel = self.peak_accel.max(a.abs());
                self.last_grid_v = self.state.v;
            }
        }
        self.apply_due();
    }
}
