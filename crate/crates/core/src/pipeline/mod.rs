//! From raw multi-rate streams to the chest-relative 10 Hz dataset.
//!
//! The assembly chain is: map hand poses into the chest world frame, resample
//! onto a uniform grid, smooth the world-frame pose sequences, re-express the
//! hand relative to the chest, project the chest onto the ground plane and map
//! the fingertip marker distance to an aperture.

pub mod filter;
pub mod io;
pub mod resample;
pub mod smooth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, KinState};
use crate::anchoring::{AnchorError, VioTrajectory};
use crate::geometry::{yaw_project, GeometryError, Pose2, Pose3, Timestamped};
use crate::jsonl::JsonlError;

pub use filter::{
    lateral_quantile, project_nonholonomic, quality_filter, saturation_filter, BaseCommand, QualityConfig,
    QualityReport, RejectReason, SaturationFilter, WorkspaceBounds,
};
pub use resample::{resample_to_grid, AlignedSample};
pub use smooth::savgol_smooth;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stream `{0}` is empty")]
    EmptyStream(&'static str),
    #[error("stream `{0}` is not strictly increasing in time")]
    Unordered(&'static str),
    #[error("streams do not overlap; resampling grid is empty")]
    EmptyGrid,
    #[error("Savitzky-Golay window {window} must be odd, at least 5 and at most the series length {len}")]
    SavgolWindow { window: usize, len: usize },
    #[error("quantile {0} is outside (0, 1]")]
    InvalidQuantile(f64),
    #[error("gripper calibration requires d_open > d_closed (got {d_closed} / {d_open})")]
    InvalidCalib { d_closed: f64, d_open: f64 },
    #[error("session {} rejected by quality filter", .0.session_id)]
    Rejected(QualityReport),
    #[error("step {step} (t={t:.3}s): {source}")]
    Step { step: usize, t: f64, source: GeometryError },
    #[error("at least {need} steps required, got {got}")]
    TooFewSteps { need: usize, got: usize },
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

/// Two-point open/close calibration of the fingertip marker distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperCalib {
    pub d_closed: f64,
    pub d_open: f64,
}

impl GripperCalib {
    pub fn new(d_closed: f64, d_open: f64) -> Result<Self, PipelineError> {
        if !(d_open > d_closed) {
            return Err(PipelineError::InvalidCalib { d_closed, d_open });
        }
        Ok(Self { d_closed, d_open })
    }
}

impl Default for GripperCalib {
    fn default() -> Self {
        Self {
            d_closed: 0.020,
            d_open: 0.085,
        }
    }
}

/// Linear map of marker distance to aperture in `[0, 1]`.
pub fn grip_from_markers(d: f64, calib: &GripperCalib) -> f64 {
    ((d - calib.d_closed) / (calib.d_open - calib.d_closed)).clamp(0.0, 1.0)
}

/// Raw streams of one demonstration session. Trajectories are IMU poses in
/// each node's own world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSession {
    pub id: String,
    pub chest: VioTrajectory,
    pub hand: VioTrajectory,
    pub extrinsics: crate::anchoring::Extrinsics,
    /// `T^{W_c}_{W_h}` from anchoring.
    pub chest_world_from_hand_world: Pose3,
    /// Fingertip marker distance, m.
    pub markers: Vec<Timestamped<f64>>,
    pub chest_images: Vec<Timestamped<String>>,
    pub hand_images: Vec<Timestamped<String>>,
}

impl RawSession {
    /// Spans of the streams every session must have.
    pub(crate) fn required_spans(&self) -> Result<[(f64, f64); 3], PipelineError> {
        let span = |s: &VioTrajectory, name| {
            if s.samples.is_empty() {
                Err(PipelineError::EmptyStream(name))
            } else {
                Ok(s.span())
            }
        };
        let (Some(m0), Some(m1)) = (self.markers.first(), self.markers.last()) else {
            return Err(PipelineError::EmptyStream("markers"));
        };
        Ok([
            span(&self.chest, "chest trajectory")?,
            span(&self.hand, "hand trajectory")?,
            (m0.t, m1.t),
        ])
    }
}

/// Chest-relative hand pose, `(T^{W_c}_{C_c})^-1 * T^{W_c}_{C_h}`.
pub fn decouple_step(chest_world: &Pose3, hand_world: &Pose3) -> Pose3 {
    chest_world.inverse().compose(hand_world)
}

/// One 10 Hz record of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub t: f64,
    pub base: Pose2,
    pub hand_rel: Pose3,
    pub grip: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chest_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_image: Option<String>,
}

impl DemoStep {
    pub fn state(&self) -> KinState {
        KinState {
            base: self.base,
            hand: self.hand_rel,
            grip: self.grip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoDataset {
    pub session_id: String,
    pub steps: Vec<DemoStep>,
    pub report: QualityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rate_hz: f64,
    /// Savitzky-Golay window in samples; `None` disables smoothing.
    pub savgol_window: Option<usize>,
    pub savgol_order: usize,
    pub quality: QualityConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rate_hz: 10.0,
            savgol_window: Some(9),
            savgol_order: 2,
            quality: QualityConfig::default(),
        }
    }
}

/// World-frame (chest world) pose sequences on the grid, after smoothing.
/// This is what a global-label policy would be trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldTracks {
    pub samples: Vec<AlignedSample>,
}

/// Quality filter, resampling and optional smoothing.
pub fn world_tracks(session: &RawSession, cfg: &PipelineConfig) -> Result<WorldTracks, PipelineError> {
    let report = quality_filter(session, &cfg.quality);
    if !report.accepted {
        return Err(PipelineError::Rejected(report));
    }
    let mut samples = resample_to_grid(session, cfg.rate_hz)?;
    if let Some(window) = cfg.savgol_window {
        let chest: Vec<_> = samples.iter().map(|s| s.chest_world).collect();
        let hand: Vec<_> = samples.iter().map(|s| s.hand_world).collect();
        let chest = smooth::smooth_poses(&chest, window, cfg.savgol_order)?;
        let hand = smooth::smooth_poses(&hand, window, cfg.savgol_order)?;
        for (s, (c, h)) in samples.iter_mut().zip(chest.into_iter().zip(hand)) {
            s.chest_world = c;
            s.hand_world = h;
        }
    }
    Ok(WorldTracks { samples })
}

/// Full assembly of one session into the chest-relative dataset.
pub fn assemble_dataset(
    session: &RawSession,
    calib: &GripperCalib,
    cfg: &PipelineConfig,
) -> Result<DemoDataset, PipelineError> {
    let report = quality_filter(session, &cfg.quality);
    let tracks = world_tracks(session, cfg)?;
    let mut steps = Vec::with_capacity(tracks.samples.len());
    for (i, s) in tracks.samples.into_iter().enumerate() {
        let base = yaw_project(&s.chest_world).map_err(|source| PipelineError::Step {
            step: i,
            t: s.t,
            source,
        })?;
        steps.push(DemoStep {
            t: s.t,
            base,
            hand_rel: decouple_step(&s.chest_world, &s.hand_world),
            grip: grip_from_markers(s.marker_distance, calib),
            chest_image: s.chest_image,
            hand_image: s.hand_image,
        });
    }
    Ok(DemoDataset {
        session_id: session.id.clone(),
        steps,
        report,
    })
}

/// One 11-D label per consecutive pair of steps.
pub fn make_action_labels(steps: &[DemoStep]) -> Result<Vec<Action>, PipelineError> {
    if steps.len() < 2 {
        return Err(PipelineError::TooFewSteps {
            need: 2,
            got: steps.len(),
        });
    }
    Ok(steps
        .windows(2)
        .map(|w| w[0].state().action_to(&w[1].state()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geodesic_so3, UnitQuat};

    #[test]
    fn grip_mapping() {
        let c = GripperCalib::new(0.020, 0.085).unwrap();
        assert_eq!(grip_from_markers(0.020, &c), 0.0);
        assert_eq!(grip_from_markers(0.085, &c), 1.0);
        assert!((grip_from_markers(0.0525, &c) - 0.5).abs() < 1e-12);
        assert_eq!(grip_from_markers(0.001, &c), 0.0);
        assert_eq!(grip_from_markers(0.2, &c), 1.0);
        assert!(GripperCalib::new(0.05, 0.05).is_err());
    }

    #[test]
    fn decouple_with_identity_chest_and_shared_motion() {
        let hand = Pose3::from_translation([1.0, 0.5, 0.2]);
        assert_eq!(decouple_step(&Pose3::identity(), &hand).translation, [1.0, 0.5, 0.2]);
        let chest = Pose3::new(UnitQuat::rot_z(0.3), [0.2, 0.1, 1.3]);
        let hand = Pose3::new(UnitQuat::from_axis_angle([0.0, 1.0, 0.2], 0.7), [0.6, 0.0, 1.0]);
        let walk = Pose3::new(UnitQuat::rot_z(-1.1), [3.0, -2.0, 0.0]);
        let a = decouple_step(&chest, &hand);
        let b = decouple_step(&walk.compose(&chest), &walk.compose(&hand));
        for k in 0..3 {
            assert!((a.translation[k] - b.translation[k]).abs() < 1e-12);
        }
        assert!(geodesic_so3(&a.rotation, &b.rotation) < 1e-12);
    }

    fn step(t: f64, x: f64, g: f64) -> DemoStep {
        DemoStep {
            t,
            base: Pose2::new(x, 0.0, 0.0),
            hand_rel: Pose3::from_translation([0.4, 0.0, -0.3]),
            grip: g,
            chest_image: None,
            hand_image: None,
        }
    }

    #[test]
    fn static_demo_labels() {
        let steps: Vec<_> = (0..5).map(|i| step(i as f64 * 0.1, 0.0, 0.7)).collect();
        let labels = make_action_labels(&steps).unwrap();
        assert_eq!(labels.len(), 4);
        for l in labels {
            assert_eq!(l.0.len(), 11);
            assert_eq!(l.base_delta(), (0.0, 0.0, 0.0));
            assert_eq!(l.dp(), [0.0; 3]);
            assert_eq!(l.dq(), UnitQuat::identity());
            assert_eq!(l.grip(), 0.7);
        }
        assert!(make_action_labels(&steps[..1]).is_err());
    }
}
