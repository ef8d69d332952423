//! Scripted expert: a staged control law that the demonstration generator
//! runs closed-loop and the chunk policies roll forward open-loop.

use serde::{Deserialize, Serialize};

use super::plant::arc;
use super::scenario::{SimScenario, Stage};
use crate::action::{Action, KinState};
use crate::executor::{ChunkPolicy, Observation, PolicyError};
use crate::geometry::{norm3, sub3, wrap_angle, Pose2, Pose3, UnitQuat, Vec3};

/// Chest-relative hand pose while driving.
pub const STOW: Vec3 = [0.25, 0.0, -0.35];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub dt: f64,
    pub cruise_speed: f64,
    pub accel: f64,
    /// Deceleration of the stopping profile; gentler than `accel` so a
    /// lagging base does not run past its final waypoints.
    pub brake: f64,
    /// Speed per metre of remaining distance near a goal, 1/s; gives an
    /// exponential final approach that a lagging base can follow.
    pub approach_gain: f64,
    pub turn_rate: f64,
    pub angular_accel: f64,
    /// Heading error above which the base stops and turns in place.
    pub align_threshold: f64,
    /// Hand displacement per step, m.
    pub hand_step: f64,
    /// Aperture change per step.
    pub grip_step: f64,
    pub chest_height: f64,
    /// Tolerances the law drives to (tighter than the scenario checks).
    pub pos_eps: f64,
    pub heading_eps: f64,
    /// Looser tolerances used when judging a stage from a real observation.
    pub pos_accept: f64,
    pub heading_accept: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            cruise_speed: 0.3,
            accel: 0.5,
            brake: 0.25,
            approach_gain: 1.5,
            turn_rate: 0.8,
            angular_accel: 2.0,
            align_threshold: 0.15,
            hand_step: 0.03,
            grip_step: 0.2,
            chest_height: 1.2,
            pos_eps: 0.015,
            heading_eps: 0.02,
            pos_accept: 0.03,
            heading_accept: 0.05,
        }
    }
}

/// Stage goals expressed in the frame the law runs in.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGoals {
    pub stages: Vec<Stage>,
}

impl StageGoals {
    /// Re-expresses base goals with `base_frame` and hand points with
    /// `hand_frame` (both map world coordinates into the policy frame).
    pub fn mapped(scenario: &SimScenario, base_frame: &Pose2, hand_frame: &Pose2) -> Self {
        let bf = *base_frame;
        let hf = Pose3::from_pose2(hand_frame, 0.0);
        let stages = scenario
            .stages
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if let Some(b) = s.base.as_mut() {
                    b.pose = bf.compose(&b.pose);
                }
                if let Some(h) = s.hand.as_mut() {
                    h.point = hf.transform_point(h.point);
                }
                s
            })
            .collect();
        Self { stages }
    }
}

/// Law state: kinematic state plus the base velocities it carries between
/// steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawState {
    pub kin: KinState,
    pub v: f64,
    pub omega: f64,
    pub stage: usize,
}

fn approach(current: f64, desired: f64, max_delta: f64) -> f64 {
    current + (desired - current).clamp(-max_delta, max_delta)
}

fn chest(base: &Pose2, h: f64) -> Pose3 {
    Pose3::from_pose2(base, h)
}

/// Hand target in the chest frame for a world point.
fn hand_target(base: &Pose2, point: Vec3, cfg: &ExpertConfig) -> Vec3 {
    chest(base, cfg.chest_height).inverse().transform_point(point)
}

/// Whether `stage` counts as done for state `s`; `strict` selects the law's
/// own tolerances.
pub fn stage_done(stage: &Stage, s: &KinState, cfg: &ExpertConfig, strict: bool) -> bool {
    let (pe, he) = if strict {
        (cfg.pos_eps, cfg.heading_eps)
    } else {
        (cfg.pos_accept, cfg.heading_accept)
    };
    if let Some(g) = &stage.base {
        let d = (g.pose.x - s.base.x).hypot(g.pose.y - s.base.y);
        if d > pe || wrap_angle(g.pose.theta - s.base.theta).abs() > he {
            return false;
        }
    }
    if let Some(h) = &stage.hand {
        let target = hand_target(&s.base, h.point, cfg);
        if norm3(sub3(target, s.hand.translation)) > 0.5 * h.tol {
            return false;
        }
    }
    if let Some(g) = &stage.grip {
        if (s.grip - g.target).abs() > 0.05 {
            return false;
        }
    }
    true
}

fn base_velocity(stage: Option<&Stage>, s: &LawState, cfg: &ExpertConfig) -> (f64, f64) {
    let stop = (0.0, 0.0);
    let Some(goal) = stage.and_then(|st| st.base) else {
        return stop;
    };
    let b = s.kin.base;
    let (dx, dy) = (goal.pose.x - b.x, goal.pose.y - b.y);
    let d = dx.hypot(dy);
    let turn = |e: f64| {
        let w = (3.0 * e)
            .abs()
            .min(cfg.turn_rate)
            .min((2.0 * cfg.angular_accel * e.abs()).sqrt());
        w.copysign(e)
    };
    if d <= cfg.pos_eps {
        let e = wrap_angle(goal.pose.theta - b.theta);
        return if e.abs() <= cfg.heading_eps {
            stop
        } else {
            (0.0, turn(e))
        };
    }
    let e_h = wrap_angle(dy.atan2(dx) - b.theta);
    let brake = (2.0 * cfg.brake * d).sqrt().min(cfg.approach_gain * d);
    if d < 0.1 && e_h.abs() > std::f64::consts::FRAC_PI_2 {
        // small overshoot: back up instead of turning around
        let e_back = wrap_angle(e_h - std::f64::consts::PI);
        return (-brake.min(0.1), (2.0 * e_back).clamp(-0.5, 0.5));
    }
    if e_h.abs() > cfg.align_threshold && d >= 0.1 {
        return (0.0, turn(e_h));
    }
    (brake.min(cfg.cruise_speed), (2.0 * e_h).clamp(-0.5, 0.5))
}

fn hand_and_grip(stage: Option<&Stage>, s: &LawState, cfg: &ExpertConfig) -> (Vec3, f64) {
    let p = s.kin.hand.translation;
    let toward = |target: Vec3| {
        let d = sub3(target, p);
        let n = norm3(d);
        if n <= cfg.hand_step {
            target
        } else {
            let k = cfg.hand_step / n;
            [p[0] + d[0] * k, p[1] + d[1] * k, p[2] + d[2] * k]
        }
    };
    match stage {
        Some(st) if st.hand.is_some() => {
            let h = st.hand.expect("checked");
            let target = hand_target(&s.kin.base, h.point, cfg);
            let next = toward(target);
            let grip = match st.grip {
                Some(g) if norm3(sub3(target, next)) <= 0.5 * h.tol => approach(s.kin.grip, g.target, cfg.grip_step),
                _ => s.kin.grip,
            };
            (next, grip)
        }
        Some(_) => (toward(STOW), s.kin.grip),
        None => (p, s.kin.grip),
    }
}

/// One step of the law; advances the stage when the current one is done.
pub fn law_step(goals: &StageGoals, s: &LawState, cfg: &ExpertConfig) -> (Action, LawState) {
    let mut stage = s.stage;
    while stage < goals.stages.len() && stage_done(&goals.stages[stage], &s.kin, cfg, true) {
        stage += 1;
    }
    let cur = goals.stages.get(stage);
    let s_now = LawState { stage, ..*s };
    let (v_des, w_des) = base_velocity(cur, &s_now, cfg);
    let v = approach(s.v, v_des, cfg.accel * cfg.dt);
    let omega = approach(s.omega, w_des, cfg.angular_accel * cfg.dt);
    let (dx, dy, dth) = arc(v, omega, cfg.dt);
    let (hand, grip) = hand_and_grip(cur, &s_now, cfg);
    let mut a = Action::hold(grip);
    a.0[0] = dx;
    a.0[1] = dy;
    a.0[2] = dth;
    let dp = sub3(hand, s.kin.hand.translation);
    a.0[3..6].copy_from_slice(&dp);
    let kin = s.kin.apply(&a);
    (a, LawState { kin, v, omega, stage })
}

pub fn all_done(goals: &StageGoals, s: &LawState) -> bool {
    s.stage >= goals.stages.len()
}

/// Initial hand and grip of every episode.
pub fn initial_kin(base: Pose2) -> KinState {
    KinState {
        base,
        hand: Pose3::new(UnitQuat::identity(), STOW),
        grip: 1.0,
    }
}

/// Which frame the policy's hand labels live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFrame {
    /// Chest-relative hand labels: hand targets follow the perceived scene.
    Relative,
    /// World-frame hand labels: hand targets are the poses recorded in the
    /// demonstration world and ignore where this episode started.
    Global,
}

impl LabelFrame {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Relative => "relative",
            Self::Global => "global",
        }
    }
}

impl std::str::FromStr for LabelFrame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relative" | "chest-relative" | "chest_relative" => Ok(Self::Relative),
            "global" => Ok(Self::Global),
            _ => Err(format!("unknown label frame `{s}` (expected global or relative)")),
        }
    }
}

/// Chunk generator that rolls the expert law forward from each observation.
/// Observations are in the odometry frame (start pose at the origin).
#[derive(Debug, Clone)]
pub struct StagePolicy {
    pub goals: StageGoals,
    pub cfg: ExpertConfig,
    pub horizon: usize,
    stage: usize,
}

impl StagePolicy {
    /// `true_start` is the episode's start pose in the world; base goals are
    /// always perceived relative to it, hand goals only with relative labels.
    pub fn new(scenario: &SimScenario, true_start: &Pose2, label: LabelFrame, horizon: usize) -> Self {
        let to_odom = true_start.inverse();
        let hand_frame = match label {
            LabelFrame::Relative => to_odom,
            LabelFrame::Global => Pose2::identity(),
        };
        Self {
            goals: StageGoals::mapped(scenario, &to_odom, &hand_frame),
            cfg: ExpertConfig::default(),
            horizon,
            stage: 0,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }
}

impl ChunkPolicy for StagePolicy {
    fn plan(&mut self, obs: &Observation) -> Result<Vec<Action>, PolicyError> {
        while let Some(st) = self.goals.stages.get(self.stage) {
            // the grip only moves once the hand is placed, so a reached grip
            // target means the stage was done even if the base has moved on
            let gripped = st.hand.is_some() && st.grip.is_some_and(|g| (obs.state.grip - g.target).abs() <= 0.05);
            if !gripped && !stage_done(st, &obs.state, &self.cfg, false) {
                break;
            }
            self.stage += 1;
        }
        let (dx, _, dth) = obs.prev_action.base_delta();
        let mut s = LawState {
            kin: obs.state,
            v: dx / self.cfg.dt,
            omega: dth / self.cfg.dt,
            stage: self.stage,
        };
        let mut out = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let (a, next) = law_step(&self.goals, &s, &self.cfg);
            out.push(a);
            s = next;
        }
        Ok(out)
    }
}
