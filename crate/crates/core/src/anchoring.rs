//! Spatial anchoring of independently initialized odometry frames.
//!
//! Each sensor node (chest, hand) runs its own visual-inertial odometry and
//! therefore reports poses in its own world frame `W_i`. A static board seen
//! by both nodes ties the frames together:
//!
//! ```text
//! T^{W_i}_{tag}(t) = T^{W_i}_{I_i}(t) * T^{I_i}_{C_i} * T^{C_i}_{tag}(t)
//! T^{W_c}_{W_h}    = T^{W_c}_{tag} * (T^{W_h}_{tag})^-1
//! ```
//!
//! Detections are averaged per node (arithmetic mean of translations, chordal
//! mean of hemisphere-aligned quaternions) before the cross-node transform is
//! formed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    bracket, geodesic_so3, interpolate_pose, norm3, strictly_increasing, sub3, Pose3, Timestamped, UnitQuat,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeId {
    Chest,
    Hand,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Chest => f.write_str("chest"),
            NodeId::Hand => f.write_str("hand"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("{node}: detection at t={t} lies outside the trajectory span")]
    DetectionOutOfSpan { node: NodeId, t: f64 },
    #[error("{node}: trajectory timestamps are not strictly increasing")]
    NonMonotonicTrajectory { node: NodeId },
    #[error("{node}: trajectory is empty")]
    EmptyTrajectory { node: NodeId },
    #[error("{node}: negative or non-finite covariance trace at t={t}")]
    InvalidCovariance { node: NodeId, t: f64 },
    #[error("{node}: no valid detections")]
    NoValidDetections { node: NodeId },
    #[error("cannot average an empty pose set")]
    EmptyPoseSet,
    #[error("detection belongs to {got}, trajectory to {expected}")]
    NodeMismatch { expected: NodeId, got: NodeId },
}

/// One odometry sample of `T^{W_i}_{I_i}(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VioSample {
    pub t: f64,
    pub pose: Pose3,
    /// Trace of the position covariance, m^2.
    pub cov_trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VioTrajectory {
    pub node: NodeId,
    pub samples: Vec<VioSample>,
}

impl VioTrajectory {
    /// Validates ordering and covariance values.
    pub fn new(node: NodeId, samples: Vec<VioSample>) -> Result<Self, AnchorError> {
        if samples.is_empty() {
            return Err(AnchorError::EmptyTrajectory { node });
        }
        if !samples.windows(2).all(|w| w[0].t < w[1].t) || !samples.iter().all(|s| s.t.is_finite()) {
            return Err(AnchorError::NonMonotonicTrajectory { node });
        }
        if let Some(s) = samples
            .iter()
            .find(|s| !(s.cov_trace >= 0.0 && s.cov_trace.is_finite()))
        {
            return Err(AnchorError::InvalidCovariance { node, t: s.t });
        }
        Ok(Self { node, samples })
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.samples.first().map_or(f64::NAN, |s| s.t),
            self.samples.last().map_or(f64::NAN, |s| s.t),
        )
    }

    pub fn poses(&self) -> Vec<Timestamped<Pose3>> {
        self.samples.iter().map(|s| Timestamped::new(s.t, s.pose)).collect()
    }

    /// Interpolated pose (linear position, slerp rotation).
    pub fn pose_at(&self, t: f64) -> Option<Pose3> {
        interpolate_pose(&self.poses(), t)
    }

    /// Covariance trace at `t`: the larger of the two bracketing samples.
    pub fn cov_at(&self, t: f64) -> Option<f64> {
        let stamped: Vec<_> = self
            .samples
            .iter()
            .map(|s| Timestamped::new(s.t, s.cov_trace))
            .collect();
        let (i, s) = bracket(&stamped, t)?;
        if s == 0.0 || i + 1 >= stamped.len() {
            return Some(stamped[i].value);
        }
        Some(stamped[i].value.max(stamped[i + 1].value))
    }

    pub fn max_cov_trace(&self) -> f64 {
        self.samples.iter().map(|s| s.cov_trace).fold(0.0, f64::max)
    }

    pub fn is_time_ordered(&self) -> bool {
        strictly_increasing(&self.poses())
    }
}

/// Camera-to-IMU extrinsic `T^{I_i}_{C_i}` of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsic {
    pub node: NodeId,
    pub imu_from_camera: Pose3,
}

/// The extrinsics document: `{"chest": [7], "hand": [7]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub chest: Pose3,
    pub hand: Pose3,
}

impl Default for Extrinsics {
    fn default() -> Self {
        Self {
            chest: Pose3::identity(),
            hand: Pose3::identity(),
        }
    }
}

impl Extrinsics {
    pub fn for_node(&self, node: NodeId) -> Extrinsic {
        Extrinsic {
            node,
            imu_from_camera: match node {
                NodeId::Chest => self.chest,
                NodeId::Hand => self.hand,
            },
        }
    }
}

/// A board pose in the camera frame, `T^{C_i}_{tag}(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagDetection {
    pub node: NodeId,
    pub t: f64,
    pub tag_pose: Pose3,
}

/// Board pose in the node's world frame at the detection time.
pub fn board_pose_in_world(traj: &VioTrajectory, ext: &Extrinsic, det: &TagDetection) -> Result<Pose3, AnchorError> {
    if det.node != traj.node {
        return Err(AnchorError::NodeMismatch {
            expected: traj.node,
            got: det.node,
        });
    }
    let world_from_imu = traj.pose_at(det.t).ok_or(AnchorError::DetectionOutOfSpan {
        node: det.node,
        t: det.t,
    })?;
    Ok(world_from_imu.compose(&ext.imu_from_camera).compose(&det.tag_pose))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseAverage {
    pub pose: Pose3,
    /// Set when some pair of input rotations is more than 90 degrees apart.
    pub ill_conditioned: bool,
}

/// Least-squares average: mean translation, chordal quaternion mean with every
/// sample aligned to the hemisphere of the first.
pub fn average_poses(poses: &[Pose3]) -> Result<PoseAverage, AnchorError> {
    let first = poses.first().ok_or(AnchorError::EmptyPoseSet)?;
    let n = poses.len() as f64;
    let mut t = [0.0; 3];
    let mut q = [0.0; 4];
    for p in poses {
        for k in 0..3 {
            t[k] += p.translation[k];
        }
        let a = p.rotation.aligned_to(&first.rotation).to_array();
        for k in 0..4 {
            q[k] += a[k];
        }
    }
    let rotation = UnitQuat::normalized(q[0], q[1], q[2], q[3]).canonical();
    let ill_conditioned = poses.iter().enumerate().any(|(i, a)| {
        poses[i + 1..]
            .iter()
            .any(|b| geodesic_so3(&a.rotation, &b.rotation) > std::f64::consts::FRAC_PI_2)
    });
    Ok(PoseAverage {
        pose: Pose3::new(rotation, [t[0] / n, t[1] / n, t[2] / n]),
        ill_conditioned,
    })
}

/// `T^{W_c}_{W_h}` from the two per-node board anchors.
pub fn cross_node_transform(anchor_chest: &Pose3, anchor_hand: &Pose3) -> Pose3 {
    anchor_chest.compose(&anchor_hand.inverse())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Detections taken while the node's covariance trace exceeds this are
    /// not valid, m^2.
    pub cov_threshold: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self { cov_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualStats {
    pub position_rms_m: f64,
    pub rotation_rms_rad: f64,
}

/// Board anchor of one node, `T̂^{W_i}_{tag}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeAnchor {
    pub node: NodeId,
    pub world_from_tag: Pose3,
    pub detection_count: usize,
    pub rejected_count: usize,
    pub residual: ResidualStats,
    pub ill_conditioned: bool,
}

/// Anchoring output for a whole session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    pub chest: NodeAnchor,
    pub hand: NodeAnchor,
    /// `T^{W_c}_{W_h}`.
    pub chest_world_from_hand_world: Pose3,
}

fn residuals(samples: &[Pose3], mean: &Pose3) -> ResidualStats {
    let n = samples.len() as f64;
    let (mut sp, mut sr) = (0.0, 0.0);
    for p in samples {
        sp += norm3(sub3(p.translation, mean.translation)).powi(2);
        sr += geodesic_so3(&p.rotation, &mean.rotation).powi(2);
    }
    ResidualStats {
        position_rms_m: (sp / n).sqrt(),
        rotation_rms_rad: (sr / n).sqrt(),
    }
}

/// Anchors one node using every valid detection. Out-of-span detections and
/// detections taken above the covariance threshold are counted as rejected.
pub fn anchor_node(
    traj: &VioTrajectory,
    ext: &Extrinsic,
    detections: &[TagDetection],
    cfg: &AnchorConfig,
) -> Result<NodeAnchor, AnchorError> {
    let mut boards = Vec::new();
    let mut rejected = 0;
    for det in detections.iter().filter(|d| d.node == traj.node) {
        match traj.cov_at(det.t) {
            Some(c) if c <= cfg.cov_threshold => {}
            _ => {
                rejected += 1;
                continue;
            }
        }
        match board_pose_in_world(traj, ext, det) {
            Ok(p) => boards.push(p),
            Err(AnchorError::DetectionOutOfSpan { .. }) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    if boards.is_empty() {
        return Err(AnchorError::NoValidDetections { node: traj.node });
    }
    let avg = average_poses(&boards)?;
    Ok(NodeAnchor {
        node: traj.node,
        world_from_tag: avg.pose,
        detection_count: boards.len(),
        rejected_count: rejected,
        residual: residuals(&boards, &avg.pose),
        ill_conditioned: avg.ill_conditioned,
    })
}

pub fn anchor_session(
    chest: &VioTrajectory,
    hand: &VioTrajectory,
    extrinsics: &Extrinsics,
    detections: &[TagDetection],
    cfg: &AnchorConfig,
) -> Result<AnchorResult, AnchorError> {
    let c = anchor_node(chest, &extrinsics.for_node(NodeId::Chest), detections, cfg)?;
    let h = anchor_node(hand, &extrinsics.for_node(NodeId::Hand), detections, cfg)?;
    Ok(AnchorResult {
        chest: c,
        hand: h,
        chest_world_from_hand_world: cross_node_transform(&c.world_from_tag, &h.world_from_tag),
    })
}

/// One line of the trajectory/detection JSONL input. Trajectory records carry
/// `pose` and `cov_trace`; detection records carry `tag_pose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamRecord {
    Trajectory {
        node: NodeId,
        t: f64,
        pose: Pose3,
        cov_trace: f64,
    },
    Detection {
        node: NodeId,
        t: f64,
        tag_pose: Pose3,
    },
}

/// Splits mixed records into per-node trajectories and detections.
pub fn split_records(
    records: &[StreamRecord],
) -> Result<(VioTrajectory, VioTrajectory, Vec<TagDetection>), AnchorError> {
    let mut chest = Vec::new();
    let mut hand = Vec::new();
    let mut dets = Vec::new();
    for r in records {
        match *r {
            StreamRecord::Trajectory {
                node,
                t,
                pose,
                cov_trace,
            } => {
                let s = VioSample { t, pose, cov_trace };
                match node {
                    NodeId::Chest => chest.push(s),
                    NodeId::Hand => hand.push(s),
                }
            }
            StreamRecord::Detection { node, t, tag_pose } => dets.push(TagDetection { node, t, tag_pose }),
        }
    }
    Ok((
        VioTrajectory::new(NodeId::Chest, chest)?,
        VioTrajectory::new(NodeId::Hand, hand)?,
        dets,
    ))
}

pub fn trajectory_records(traj: &VioTrajectory) -> Vec<StreamRecord> {
    traj.samples
        .iter()
        .map(|s| StreamRecord::Trajectory {
            node: traj.node,
            t: s.t,
            pose: s.pose,
            cov_trace: s.cov_trace,
        })
        .collect()
}

pub fn detection_records(dets: &[TagDetection]) -> Vec<StreamRecord> {
    dets.iter()
        .map(|d| StreamRecord::Detection {
            node: d.node,
            t: d.t,
            tag_pose: d.tag_pose,
        })
        .collect()
}
