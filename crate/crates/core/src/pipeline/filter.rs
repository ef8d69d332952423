//! Session quality filtering, non-holonomic projection and the lateral
//! velocity checks that go with it.

use serde::{Deserialize, Serialize};

use super::{PipelineError, RawSession};
use crate::anchoring::{NodeId, VioTrajectory};
use crate::geometry::{sub3, wrap_angle, Pose2, Vec3};

/// Forward and yaw-rate command for a differential-drive base.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseCommand {
    /// m/s along the current heading.
    pub v: f64,
    /// rad/s.
    pub omega: f64,
}

/// Axis-aligned box, relative to a trajectory's first position, that every
/// sample must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl WorkspaceBounds {
    pub fn symmetric(half_extent: f64) -> Self {
        Self {
            min: [-half_extent; 3],
            max: [half_extent; 3],
        }
    }

    pub fn contains(&self, d: Vec3) -> bool {
        (0..3).all(|k| d[k] >= self.min[k] && d[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    /// Maximum allowed position covariance trace, m^2.
    pub cov_threshold: f64,
    pub workspace: WorkspaceBounds,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            cov_threshold: 0.01,
            workspace: WorkspaceBounds::symmetric(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum RejectReason {
    Covariance { node: NodeId, t: f64, cov_trace: f64 },
    Workspace { node: NodeId, t: f64, displacement: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub session_id: String,
    pub accepted: bool,
    pub reasons: Vec<RejectReason>,
    pub max_cov_trace: f64,
}

impl QualityReport {
    pub fn fired(&self, rule: &str) -> bool {
        self.reasons.iter().any(|r| {
            matches!(
                (r, rule),
                (RejectReason::Covariance { .. }, "covariance") | (RejectReason::Workspace { .. }, "workspace")
            )
        })
    }
}

fn check_node(traj: &VioTrajectory, cfg: &QualityConfig, reasons: &mut Vec<RejectReason>) {
    if let Some(s) = traj.samples.iter().find(|s| s.cov_trace > cfg.cov_threshold) {
        reasons.push(RejectReason::Covariance {
            node: traj.node,
            t: s.t,
            cov_trace: s.cov_trace,
        });
    }
    let Some(origin) = traj.samples.first().map(|s| s.pose.translation) else {
        return;
    };
    if let Some(s) = traj
        .samples
        .iter()
        .find(|s| !cfg.workspace.contains(sub3(s.pose.translation, origin)))
    {
        reasons.push(RejectReason::Workspace {
            node: traj.node,
            t: s.t,
            displacement: sub3(s.pose.translation, origin),
        });
    }
}

/// Accepts or rejects a session. Rejection is a value, not an error.
pub fn quality_filter(session: &RawSession, cfg: &QualityConfig) -> QualityReport {
    let mut reasons = Vec::new();
    check_node(&session.chest, cfg, &mut reasons);
    check_node(&session.hand, cfg, &mut reasons);
    QualityReport {
        session_id: session.id.clone(),
        accepted: reasons.is_empty(),
        reasons,
        max_cov_trace: session.chest.max_cov_trace().max(session.hand.max_cov_trace()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonholonomicProjection {
    pub commands: Vec<BaseCommand>,
    /// Discarded lateral velocity per step, m/s.
    pub lateral: Vec<f64>,
}

/// Projects a uniformly sampled planar path onto forward velocity and yaw
/// rate using forward differences; the lateral part is returned separately.
pub fn project_nonholonomic(path: &[Pose2], dt: f64) -> NonholonomicProjection {
    let mut commands = Vec::with_capacity(path.len().saturating_sub(1));
    let mut lateral = Vec::with_capacity(commands.capacity());
    for w in path.windows(2) {
        let xd = (w[1].x - w[0].x) / dt;
        let yd = (w[1].y - w[0].y) / dt;
        let (s, c) = w[0].theta.sin_cos();
        commands.push(BaseCommand {
            v: xd * c + yd * s,
            omega: wrap_angle(w[1].theta - w[0].theta) / dt,
        });
        lateral.push(-xd * s + yd * c);
    }
    NonholonomicProjection { commands, lateral }
}

/// Nearest-rank empirical quantile of `|v|`.
pub fn lateral_quantile(residuals: &[f64], q: f64) -> Result<f64, PipelineError> {
    if residuals.is_empty() {
        return Err(PipelineError::EmptyStream("lateral residuals"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(PipelineError::InvalidQuantile(q));
    }
    let mut a: Vec<f64> = residuals.iter().map(|v| v.abs()).collect();
    a.sort_by(f64::total_cmp);
    let rank = ((q * a.len() as f64).ceil() as usize).clamp(1, a.len());
    Ok(a[rank - 1])
}

/// Lateral velocity clip threshold, m/s.
pub const LATERAL_CLIP: f64 = 0.05;
/// Low-pass time constant applied after clipping, s.
pub const LATERAL_TAU: f64 = 0.2;
/// Compliance bound on the 0.99 quantile of |lateral velocity|, m/s.
pub const LATERAL_COMPLIANCE: f64 = 0.03;

/// Clamp to `±clip` followed by an exact first-order low-pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationFilter {
    pub clip: f64,
    pub tau: f64,
    pub state: f64,
}

impl Default for SaturationFilter {
    fn default() -> Self {
        Self::new(LATERAL_CLIP, LATERAL_TAU)
    }
}

impl SaturationFilter {
    pub fn new(clip: f64, tau: f64) -> Self {
        Self { clip, tau, state: 0.0 }
    }

    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        let u = u.clamp(-self.clip, self.clip);
        let k = if self.tau > 0.0 {
            1.0 - (-dt / self.tau).exp()
        } else {
            1.0
        };
        self.state += k * (u - self.state);
        self.state
    }
}

pub fn saturation_filter(v_perp: &[f64], clip: f64, tau: f64, dt: f64) -> Vec<f64> {
    let mut f = SaturationFilter::new(clip, tau);
    v_perp.iter().map(|&u| f.step(u, dt)).collect()
}
