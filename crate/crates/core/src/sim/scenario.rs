//! Staged geometric tasks. All goal coordinates are in the world frame in
//! which the nominal start pose is the origin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{norm3, sub3, wrap_angle, Pose2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseGoal {
    pub pose: Pose2,
    pub pos_tol: f64,
    pub heading_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandGoal {
    /// Target hand position in the world.
    pub point: Vec3,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripGoal {
    pub target: f64,
    pub tol: f64,
}

/// All present parts must hold at the same instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub base: Option<BaseGoal>,
    pub hand: Option<HandGoal>,
    pub grip: Option<GripGoal>,
}

impl Stage {
    pub fn base_ok(&self, base: &Pose2) -> bool {
        self.base.is_none_or(|g| {
            (g.pose.x - base.x).hypot(g.pose.y - base.y) <= g.pos_tol
                && wrap_angle(g.pose.theta - base.theta).abs() <= g.heading_tol
        })
    }

    pub fn hand_ok(&self, hand_world: Vec3) -> bool {
        self.hand.is_none_or(|g| norm3(sub3(g.point, hand_world)) <= g.tol)
    }

    pub fn grip_ok(&self, grip: f64) -> bool {
        self.grip.is_none_or(|g| (grip - g.target).abs() <= g.tol)
    }

    pub fn satisfied(&self, base: &Pose2, hand_world: Vec3, grip: f64) -> bool {
        self.base_ok(base) && self.hand_ok(hand_world) && self.grip_ok(grip)
    }

    /// Grasp stages close the gripper on an object.
    pub fn is_grasp(&self) -> bool {
        self.hand.is_some() && self.grip.is_some_and(|g| g.target < 0.5)
    }

    pub fn is_release(&self) -> bool {
        self.hand.is_some() && self.grip.is_some_and(|g| g.target >= 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    NavReach,
    NavTurnPlace,
    LongHorizon,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [Self::NavReach, Self::NavTurnPlace, Self::LongHorizon];

    pub fn name(&self) -> &'static str {
        match self {
            Self::NavReach => "nav_reach",
            Self::NavTurnPlace => "nav_turn_place",
            Self::LongHorizon => "long_horizon",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected nav_reach, nav_turn_place or long_horizon)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub id: ScenarioId,
    pub stages: Vec<Stage>,
    pub time_limit: f64,
    pub start_radius: f64,
    pub start_heading: f64,
}

pub const TIME_LIMIT_S: f64 = 120.0;
pub const START_RADIUS_M: f64 = 0.10;
pub const START_HEADING_DEG: f64 = 15.0;

const POS_TOL: f64 = 0.05;
const HEADING_TOL: f64 = 0.10;
const HAND_TOL: f64 = 0.03;
/// How far in front of the base the arm places the hand when reaching.
pub const REACH: f64 = 0.55;
pub const TABLE_HEIGHT: f64 = 0.9;

fn navigate(name: &str, x: f64, y: f64, theta: f64) -> Stage {
    Stage {
        name: name.into(),
        base: Some(BaseGoal {
            pose: Pose2::new(x, y, theta),
            pos_tol: POS_TOL,
            heading_tol: HEADING_TOL,
        }),
        hand: None,
        grip: None,
    }
}

fn hand_stage(name: &str, at: &Pose2, grip: f64) -> Stage {
    let (s, c) = at.theta.sin_cos();
    Stage {
        name: name.into(),
        base: None,
        hand: Some(HandGoal {
            point: [at.x + REACH * c, at.y + REACH * s, TABLE_HEIGHT],
            tol: HAND_TOL,
        }),
        grip: Some(GripGoal { target: grip, tol: 0.1 }),
    }
}

/// Drive to `at`, then grasp in front of it.
fn pick(stages: &mut Vec<Stage>, tag: &str, at: Pose2) {
    stages.push(navigate(&format!("goto_{tag}"), at.x, at.y, at.theta));
    stages.push(hand_stage(&format!("grasp_{tag}"), &at, 0.0));
}

fn place(stages: &mut Vec<Stage>, tag: &str, at: Pose2) {
    stages.push(navigate(&format!("goto_{tag}"), at.x, at.y, at.theta));
    stages.push(hand_stage(&format!("release_{tag}"), &at, 1.0));
}

impl SimScenario {
    pub fn new(id: ScenarioId) -> Self {
        let mut stages = Vec::new();
        let half_pi = std::f64::consts::FRAC_PI_2;
        match id {
            ScenarioId::NavReach => {
                pick(&mut stages, "object", Pose2::new(1.5, 0.0, 0.0));
            }
            ScenarioId::NavTurnPlace => {
                pick(&mut stages, "object", Pose2::new(1.2, 0.0, 0.0));
                place(&mut stages, "shelf", Pose2::new(1.2, 1.5, half_pi));
            }
            ScenarioId::LongHorizon => {
                pick(&mut stages, "cup", Pose2::new(1.2, 0.0, 0.0));
                place(&mut stages, "sink", Pose2::new(1.2, 1.5, half_pi));
                pick(&mut stages, "plate", Pose2::new(0.0, 1.5, std::f64::consts::PI));
                place(&mut stages, "rack", Pose2::new(0.0, 0.0, -half_pi));
            }
        }
        Self {
            id,
            stages,
            time_limit: TIME_LIMIT_S,
            start_radius: START_RADIUS_M,
            start_heading: START_HEADING_DEG.to_radians(),
        }
    }

    /// Start pose uniformly inside the radius disk and heading band.
    pub fn sample_start<R: Rng>(&self, rng: &mut R) -> Pose2 {
        let r = self.start_radius * rng.random::<f64>().sqrt();
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let th = rng.random_range(-self.start_heading..=self.start_heading);
        Pose2::new(r * phi.cos(), r * phi.sin(), th)
    }

    /// Low-dimensional scenario features for conditioning: one-hot id.
    pub fn features(&self) -> Vec<f64> {
        ScenarioId::ALL
            .iter()
            .map(|id| if *id == self.id { 1.0 } else { 0.0 })
            .collect()
    }
}
