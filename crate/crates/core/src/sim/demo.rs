//! Synthetic demonstration sessions from the scripted expert.
//!
//! The expert is run closed-loop at 10 Hz in the real world frame. Between
//! control steps the base follows the exact constant-velocity arc, so the
//! 100 Hz odometry streams pass through every 10 Hz state exactly. The chest
//! node reports in the world frame and the hand node in its own randomly
//! placed gravity-aligned frame; both see a static board.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::plant::arc;
use super::policy::{all_done, initial_kin, law_step, ExpertConfig, LawState, StageGoals};
use super::scenario::{ScenarioId, SimScenario};
use super::SimError;
use crate::action::Action;
use crate::anchoring::{Extrinsics, NodeId, TagDetection, VioSample, VioTrajectory};
use crate::geometry::{Pose2, Pose3, Timestamped, UnitQuat, Vec3};
use crate::pipeline::io::SessionFiles;
use crate::pipeline::{DemoStep, GripperCalib};
use crate::seed::{self, SimRng};

/// Odometry rate of both nodes.
pub const VIO_HZ: usize = 100;
pub const MARKER_HZ: usize = 30;
/// Steps of stillness appended after the last stage.
const TAIL_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoOptions {
    /// Position noise per odometry sample, m.
    pub vio_pos_std: f64,
    /// Rotation noise per odometry sample, rad.
    pub vio_rot_std: f64,
    pub det_pos_std: f64,
    pub det_rot_std: f64,
    /// Detections per node.
    pub detections: usize,
    /// Reported covariance trace of healthy samples, m^2.
    pub nominal_cov: f64,
    /// Replaces one hand sample's covariance with this value.
    pub cov_spike: Option<f64>,
    /// Sample the start pose within the scenario's randomization band.
    pub randomize_start: bool,
}

impl Default for DemoOptions {
    /// Noiseless streams.
    fn default() -> Self {
        Self {
            vio_pos_std: 0.0,
            vio_rot_std: 0.0,
            det_pos_std: 0.0,
            det_rot_std: 0.0,
            detections: 50,
            nominal_cov: 1e-4,
            cov_spike: None,
            randomize_start: true,
        }
    }
}

impl DemoOptions {
    /// Odometry noise of about 1 cm/s on 10 Hz finite differences, and
    /// 5 mm / 0.3 deg board detections.
    pub fn noisy() -> Self {
        Self {
            vio_pos_std: 0.0007,
            vio_rot_std: 0.1f64.to_radians(),
            det_pos_std: 0.005,
            det_rot_std: 0.3f64.to_radians(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertDemo {
    pub files: SessionFiles,
    /// Decoupled 10 Hz states the pipeline should recover.
    pub truth: Vec<DemoStep>,
    /// Expert actions between consecutive truth states.
    pub actions: Vec<Action>,
    /// `T^{W_c}_{W_h}` used to generate the hand streams.
    pub chest_world_from_hand_world: Pose3,
    pub board_world: Pose3,
    pub calib: GripperCalib,
    pub start: Pose2,
}

fn perturb(p: &Pose3, pos_std: f64, rot_std: f64, rng: &mut SimRng) -> Pose3 {
    if pos_std <= 0.0 && rot_std <= 0.0 {
        return *p;
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let mut g = || n.sample(rng);
    let dr = UnitQuat::from_rotation_vector([rot_std * g(), rot_std * g(), rot_std * g()]);
    let dt = [pos_std * g(), pos_std * g(), pos_std * g()];
    p.compose(&Pose3::new(dr, dt))
}

fn random_extrinsic(rng: &mut SimRng) -> Pose3 {
    let r = UnitQuat::from_rotation_vector([
        rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
    ]);
    Pose3::new(
        r,
        [
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
        ],
    )
}

/// Runs the expert law from `start` in the world frame until every stage is
/// done. Returns the 10 Hz states with the velocities used on each step.
pub fn expert_rollout(
    scenario: &SimScenario,
    start: Pose2,
    cfg: &ExpertConfig,
) -> Result<(Vec<LawState>, Vec<Action>), SimError> {
    let goals = StageGoals::mapped(scenario, &Pose2::identity(), &Pose2::identity());
    let max_steps = (scenario.time_limit / cfg.dt).round() as usize;
    let mut s = LawState {
        kin: initial_kin(start),
        v: 0.0,
        omega: 0.0,
        stage: 0,
    };
    let mut states = vec![s];
    let mut actions = Vec::new();
    let mut tail = 0;
    while tail < TAIL_STEPS {
        if actions.len() >= max_steps {
            return Err(SimError::Unreachable {
                scenario: scenario.id.name().into(),
                stage: s.stage,
            });
        }
        let (a, next) = law_step(&goals, &s, cfg);
        actions.push(a);
        states.push(next);
        s = next;
        if all_done(&goals, &s) {
            tail += 1;
        }
    }
    Ok((states, actions))
}

pub fn scripted_expert(id: ScenarioId, seed: u64, opts: &DemoOptions) -> Result<ExpertDemo, SimError> {
    let scenario = SimScenario::new(id);
    let cfg = ExpertConfig::default();
    let start = if opts.randomize_start {
        scenario.sample_start(&mut seed::stream(seed, "demo-start"))
    } else {
        Pose2::identity()
    };
    let (states, actions) = expert_rollout(&scenario, start, &cfg)?;

    let mut frames = seed::stream(seed, "demo-frames");
    let g = Pose3::new(
        UnitQuat::rot_z(frames.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
        [
            frames.random_range(-2.0..2.0),
            frames.random_range(-2.0..2.0),
            frames.random_range(-0.5..0.5),
        ],
    );
    let ext = Extrinsics {
        chest: random_extrinsic(&mut frames),
        hand: random_extrinsic(&mut frames),
    };
    let board = Pose3::new(
        UnitQuat::rot_z(frames.random_range(-0.5..0.5)),
        [
            frames.random_range(0.5..1.5),
            frames.random_range(-1.0..1.0),
            frames.random_range(0.8..1.4),
        ],
    );
    let calib = GripperCalib::default();

    // 100 Hz ground truth camera poses, both in the world frame
    let sub = VIO_HZ / 10;
    let dt = cfg.dt;
    let mut fine: Vec<(f64, Pose3, Pose3, f64)> = Vec::new();
    for (j, w) in states.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        for m in 0..sub {
            let f = m as f64 / sub as f64;
            let (dx, dy, dth) = arc(b.v, b.omega, f * dt);
            let base = a.kin.base.compose(&Pose2::new(dx, dy, dth));
            let hand_rel = a.kin.hand.interpolate(&b.kin.hand, f);
            let chest = Pose3::from_pose2(&base, cfg.chest_height);
            let grip = a.kin.grip + (b.kin.grip - a.kin.grip) * f;
            fine.push((
                (j * sub + m) as f64 / VIO_HZ as f64,
                chest,
                chest.compose(&hand_rel),
                grip,
            ));
        }
    }
    let last = states.last().expect("non-empty");
    let chest_last = Pose3::from_pose2(&last.kin.base, cfg.chest_height);
    fine.push((
        ((states.len() - 1) * sub) as f64 / VIO_HZ as f64,
        chest_last,
        chest_last.compose(&last.kin.hand),
        last.kin.grip,
    ));

    let mut noise = seed::stream(seed, "demo-noise");
    let g_inv = g.inverse();
    let mut chest_samples = Vec::with_capacity(fine.len());
    let mut hand_samples = Vec::with_capacity(fine.len());
    for (t, c, h, _) in &fine {
        let ci = c.compose(&ext.chest.inverse());
        let hi = g_inv.compose(h).compose(&ext.hand.inverse());
        chest_samples.push(VioSample {
            t: *t,
            pose: perturb(&ci, opts.vio_pos_std, opts.vio_rot_std, &mut noise),
            cov_trace: opts.nominal_cov,
        });
        hand_samples.push(VioSample {
            t: *t,
            pose: perturb(&hi, opts.vio_pos_std, opts.vio_rot_std, &mut noise),
            cov_trace: opts.nominal_cov,
        });
    }
    if let Some(c) = opts.cov_spike {
        let mid = hand_samples.len() / 2;
        hand_samples[mid].cov_trace = c;
    }

    let mut detections = Vec::new();
    let n_det = opts.detections.min(fine.len());
    for node in [NodeId::Chest, NodeId::Hand] {
        for k in 0..n_det {
            let idx = if n_det > 1 {
                k * (fine.len() - 1) / (n_det - 1)
            } else {
                0
            };
            let (t, c, h, _) = &fine[idx];
            let tag = match node {
                NodeId::Chest => c.inverse().compose(&board),
                NodeId::Hand => g_inv.compose(h).inverse().compose(&g_inv.compose(&board)),
            };
            detections.push(TagDetection {
                node,
                t: *t,
                tag_pose: perturb(&tag, opts.det_pos_std, opts.det_rot_std, &mut noise),
            });
        }
    }

    let t_end = fine.last().expect("non-empty").0;
    let grip_at = |t: f64| {
        let x = (t / dt).min((states.len() - 1) as f64);
        let j = (x.floor() as usize).min(states.len() - 2);
        let f = x - j as f64;
        states[j].kin.grip + (states[j + 1].kin.grip - states[j].kin.grip) * f
    };
    let mut markers = Vec::new();
    let mut j = 0usize;
    loop {
        let t = j as f64 / MARKER_HZ as f64;
        if t > t_end + 1e-9 {
            break;
        }
        markers.push(Timestamped::new(
            t,
            calib.d_closed + grip_at(t) * (calib.d_open - calib.d_closed),
        ));
        j += 1;
    }
    if markers.last().is_some_and(|m| m.t < t_end - 1e-9) {
        markers.push(Timestamped::new(
            t_end,
            calib.d_closed + grip_at(t_end) * (calib.d_open - calib.d_closed),
        ));
    }

    let truth = states
        .iter()
        .enumerate()
        .map(|(j, s)| DemoStep {
            t: j as f64 * dt,
            base: s.kin.base,
            hand_rel: s.kin.hand,
            grip: s.kin.grip,
            chest_image: None,
            hand_image: None,
        })
        .collect();

    let files = SessionFiles {
        id: format!("{}-{seed}", id.name()),
        chest: VioTrajectory::new(NodeId::Chest, chest_samples)?,
        hand: VioTrajectory::new(NodeId::Hand, hand_samples)?,
        detections,
        extrinsics: ext,
        markers,
        chest_images: Vec::new(),
        hand_images: Vec::new(),
    };
    Ok(ExpertDemo {
        files,
        truth,
        actions,
        chest_world_from_hand_world: g,
        board_world: board,
        calib,
        start,
    })
}

/// Hand position in the world for a chest-relative pose.
pub fn hand_world_point(base: &Pose2, hand_rel: &Pose3, chest_height: f64) -> Vec3 {
    Pose3::from_pose2(base, chest_height).compose(hand_rel).translation
}
