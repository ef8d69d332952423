//! Kinematic rollout of a chunk and the spatial-temporal state match.

use serde::{Deserialize, Serialize};

use super::ExecutorError;
use crate::action::{integrate, Action, KinState};
use crate::geometry::{dist_se2, geodesic_so3, norm3, sub3, DEFAULT_FOLD_RADIUS};

/// Expected robot state along a chunk: base pose, chest-relative hand pose
/// and grip.
pub type PredictedState = KinState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub w_b: f64,
    pub w_t: f64,
    pub w_r: f64,
    pub w_g: f64,
    pub fold_radius: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            w_b: 1.0,
            w_t: 1.0,
            w_r: 0.2,
            w_g: 0.1,
            fold_radius: DEFAULT_FOLD_RADIUS,
        }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<(), ExecutorError> {
        let w = [self.w_b, self.w_t, self.w_r, self.w_g];
        let ok = w.iter().all(|v| v.is_finite() && *v >= 0.0)
            && w.iter().any(|v| *v > 0.0)
            && self.fold_radius.is_finite()
            && self.fold_radius >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ExecutorError::InvalidWeights(*self))
        }
    }

    /// All four weights multiplied by `c`; the fold radius is unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w_b: self.w_b * c,
            w_t: self.w_t * c,
            w_r: self.w_r * c,
            w_g: self.w_g * c,
            fold_radius: self.fold_radius,
        }
    }
}

/// Weighted squared discrepancy terms of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchTerms {
    pub base: f64,
    pub translation: f64,
    pub rotation: f64,
    pub grip: f64,
}

impl MatchTerms {
    pub fn total(&self) -> f64 {
        self.base + self.translation + self.rotation + self.grip
    }
}

pub fn match_terms(a: &PredictedState, b: &PredictedState, w: &MatchWeights) -> MatchTerms {
    MatchTerms {
        base: w.w_b * dist_se2(&a.base, &b.base, w.fold_radius).powi(2),
        translation: w.w_t * norm3(sub3(a.hand.translation, b.hand.translation)).powi(2),
        rotation: w.w_r * geodesic_so3(&a.hand.rotation, &b.hand.rotation).powi(2),
        grip: w.w_g * (a.grip - b.grip).powi(2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceReport {
    pub i_star: usize,
    pub discarded: usize,
    /// Terms at `i_star`.
    pub terms: MatchTerms,
    /// Total discrepancy of every candidate.
    pub costs: Vec<f64>,
    /// Wall-clock duration of the match; only recorded in real-time mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_wall_us: Option<f64>,
}

/// States before each action: `rollout[0] = s0`, `rollout[i]` is the state
/// after `i` actions. Length equals the chunk length.
pub fn forward_rollout(s0: &PredictedState, chunk: &[Action]) -> Vec<PredictedState> {
    let mut states = integrate(s0, chunk);
    states.truncate(chunk.len());
    states
}

/// Argmin of the weighted discrepancy, ties toward the smaller index.
pub fn state_match(
    rollout: &[PredictedState],
    now: &PredictedState,
    w: &MatchWeights,
) -> Result<SpliceReport, ExecutorError> {
    if rollout.is_empty() {
        return Err(ExecutorError::EmptyChunk);
    }
    let terms: Vec<MatchTerms> = rollout.iter().map(|s| match_terms(s, now, w)).collect();
    let costs: Vec<f64> = terms.iter().map(MatchTerms::total).collect();
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    Ok(SpliceReport {
        i_star: best,
        discarded: best,
        terms: terms[best],
        costs,
        match_wall_us: None,
    })
}

/// A chunk with its kinematic rollout. `states` has one more entry than
/// `actions`: `states[i + 1]` is the target of action `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub actions: Vec<Action>,
    pub states: Vec<PredictedState>,
    /// Observation time, s.
    pub t0_obs: f64,
}

impl ChunkPlan {
    pub fn new(s0: &PredictedState, actions: Vec<Action>, t0_obs: f64) -> Result<Self, ExecutorError> {
        if actions.is_empty() {
            return Err(ExecutorError::EmptyChunk);
        }
        let states = integrate(s0, &actions);
        Ok(Self {
            actions,
            states,
            t0_obs,
        })
    }

    pub fn rollout(&self) -> &[PredictedState] {
        &self.states[..self.actions.len()]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// One executable step: chunk index, its action and the state it should
/// reach.
#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub index: usize,
    pub action: Action,
    pub target: PredictedState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spliced {
    pub waypoints: Vec<Waypoint>,
    /// Set when only the last waypoint survived; a new plan is needed now.
    pub replan: bool,
}

/// Drops every waypoint before `i_star`.
pub fn splice(plan: &ChunkPlan, i_star: usize) -> Result<Spliced, ExecutorError> {
    let n = plan.horizon();
    if i_star >= n {
        return Err(ExecutorError::SpliceOutOfRange { i_star, horizon: n });
    }
    let waypoints = (i_star..n)
        .map(|i| Waypoint {
            index: i,
            action: plan.actions[i],
            target: plan.states[i + 1],
        })
        .collect();
    Ok(Spliced {
        waypoints,
        replan: i_star == n - 1,
    })
}
