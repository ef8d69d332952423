//! Closed-loop episodes: scenario monitor, executor and plant on one
//! virtual clock.

use serde::{Deserialize, Serialize};

use super::plant::{PlantConfig, PlantState, SimPlant};
use super::policy::{initial_kin, LabelFrame, StagePolicy};
use super::scenario::{ScenarioId, SimScenario};
use super::SimError;
use crate::executor::{run_executor, Event, ExecutorConfig, ExecutorRun, LogEvent, Monitor, MonitorSignal};
use crate::geometry::{norm3, sub3, wrap_angle, Pose2};
use crate::seed;

/// Forward acceleration above which a carried object slips, m/s^2.
pub const SLIP_ACCEL: f64 = 2.5;
/// An episode with no motion for this long is stopped as stalled, ms.
pub const STALL_MS: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scenario: ScenarioId,
    pub label: LabelFrame,
    pub plant: PlantConfig,
    pub executor: ExecutorConfig,
    pub slip_accel: f64,
}

impl EpisodeConfig {
    pub fn new(scenario: ScenarioId) -> Self {
        Self {
            scenario,
            label: LabelFrame::Relative,
            plant: PlantConfig::default(),
            executor: ExecutorConfig::default(),
            slip_accel: SLIP_ACCEL,
        }
    }
}

/// Checks the scenario stages on the true plant state, in order.
pub struct ScenarioMonitor {
    scenario: SimScenario,
    slip_accel: f64,
    pub stage: usize,
    pub carrying: bool,
    snapshot: PlantState,
    last_motion_ms: u64,
}

impl ScenarioMonitor {
    pub fn new(scenario: SimScenario, slip_accel: f64, initial: PlantState) -> Self {
        Self {
            scenario,
            slip_accel,
            stage: 0,
            carrying: false,
            snapshot: initial,
            last_motion_ms: 0,
        }
    }

    fn moved(&self, s: &PlantState) -> bool {
        let a = &self.snapshot;
        (s.base.x - a.base.x).hypot(s.base.y - a.base.y) > 1e-3
            || wrap_angle(s.base.theta - a.base.theta).abs() > 1e-3
            || norm3(sub3(s.hand_rel.translation, a.hand_rel.translation)) > 1e-3
            || (s.grip - a.grip).abs() > 1e-3
    }
}

impl Monitor<SimPlant> for ScenarioMonitor {
    fn on_tick(&mut self, _tick: u64, now_ms: u64, plant: &mut SimPlant) -> MonitorSignal {
        let peak = plant.take_peak_accel();
        let s = plant.state;
        if self.carrying && peak > self.slip_accel {
            return MonitorSignal::Stop {
                success: false,
                reason: format!("slip: |a| = {peak:.2} m/s^2"),
            };
        }
        let hand = s.hand_world(&plant.cfg).translation;
        while let Some(st) = self.scenario.stages.get(self.stage) {
            if !st.satisfied(&s.base, hand, s.grip) {
                break;
            }
            if st.is_grasp() {
                self.carrying = true;
            } else if st.is_release() {
                self.carrying = false;
            }
            self.stage += 1;
        }
        if self.stage >= self.scenario.stages.len() {
            return MonitorSignal::Stop {
                success: true,
                reason: "success".into(),
            };
        }
        if now_ms as f64 >= self.scenario.time_limit * 1000.0 {
            return MonitorSignal::Stop {
                success: false,
                reason: "timeout".into(),
            };
        }
        if self.moved(&s) {
            self.snapshot = s;
            self.last_motion_ms = now_ms;
        } else if now_ms - self.last_motion_ms >= STALL_MS {
            return MonitorSignal::Stop {
                success: false,
                reason: format!("stalled at stage {}", self.scenario.stages[self.stage].name),
            };
        }
        MonitorSignal::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    /// Time at which the episode stopped, s.
    pub completion_time: f64,
    pub rollbacks: usize,
    /// Velocity sign reversals after splices (a proxy for visible jitter).
    pub jitter: usize,
    pub splices: usize,
    pub i_star_mean: f64,
    pub i_star_std: f64,
    pub tracking_rms: f64,
    pub stages_completed: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub start: Pose2,
    pub metrics: EpisodeMetrics,
    pub run: ExecutorRun,
}

impl Episode {
    pub fn log(&self) -> &[LogEvent] {
        &self.run.log
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// RMS distance between where each commanded waypoint asked the base to be
/// and where it was one tick later.
pub fn tracking_rms(log: &[LogEvent]) -> f64 {
    let mut prev: Option<Pose2> = None;
    let (mut sum, mut n) = (0.0, 0usize);
    for e in log {
        if let Event::Command(c) = &e.event {
            if let Some(t) = prev {
                sum += (c.base_now.x - t.x).powi(2) + (c.base_now.y - t.y).powi(2);
                n += 1;
            }
            prev = c.waypoint.map(|_| c.target_base);
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn metrics_from_run(run: &ExecutorRun, stages_completed: usize, dt: f64) -> EpisodeMetrics {
    let (success, reason) = match &run.stop {
        crate::executor::StopReason::Monitor { success, reason } => (*success, reason.clone()),
        crate::executor::StopReason::PolicyFailure(m) => (false, format!("policy failure: {m}")),
        crate::executor::StopReason::MaxTicks => (false, "timeout".into()),
    };
    let stars: Vec<f64> = run.i_stars().into_iter().map(|i| i as f64).collect();
    let (i_star_mean, i_star_std) = mean_std(&stars);
    EpisodeMetrics {
        success,
        completion_time: run.ticks as f64 * dt,
        rollbacks: run.rollback_count,
        jitter: run.jitter_count,
        splices: stars.len(),
        i_star_mean,
        i_star_std,
        tracking_rms: tracking_rms(&run.log),
        stages_completed,
        reason,
    }
}

/// Start pose of an episode, drawn from its own seed stream.
pub fn episode_start(scenario: &SimScenario, seed: u64) -> Pose2 {
    scenario.sample_start(&mut seed::stream(seed, "start"))
}

pub fn run_episode(cfg: &EpisodeConfig, seed: u64) -> Result<Episode, SimError> {
    let scenario = SimScenario::new(cfg.scenario);
    let start = episode_start(&scenario, seed);
    let mut exec = cfg.executor;
    exec.max_ticks = (scenario.time_limit * 1000.0 / exec.dt_ms as f64).ceil() as u64 + 1;
    let mut policy = StagePolicy::new(&scenario, &start, cfg.label, exec.horizon);
    let k0 = initial_kin(start);
    let initial = PlantState::at_rest(start, k0.hand, k0.grip);
    let mut plant = SimPlant::new(cfg.plant, initial);
    let mut monitor = ScenarioMonitor::new(scenario, cfg.slip_accel, initial);
    let run = run_executor(&mut policy, &mut plant, &exec, &mut monitor, seed)?;
    let metrics = metrics_from_run(&run, monitor.stage, exec.dt());
    Ok(Episode { start, metrics, run })
}
