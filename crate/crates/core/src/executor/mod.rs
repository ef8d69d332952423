//! Asynchronous receding-horizon dispatch with spatial-temporal state
//! matching.
//!
//! A dispatcher ticks at a fixed control period and consumes the active
//! chunk one waypoint per tick while a planner produces the next chunk from
//! an observation that is stale by the time it arrives. On arrival the new
//! chunk's kinematic rollout is matched against the current state and the
//! waypoints the robot has already passed are dropped.
//!
//! Within a tick the order is fixed: request check, swap check, dispatch,
//! then the plant advances to the next tick boundary.

pub mod matching;
pub mod realtime;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matching::{
    forward_rollout, match_terms, splice, state_match, ChunkPlan, MatchTerms, MatchWeights, PredictedState,
    SpliceReport, Spliced, Waypoint,
};

use crate::action::{Action, KinState};
use crate::geometry::{wrap_angle, Pose2, Pose3};
use crate::pipeline::BaseCommand;
use crate::seed::{self, SimRng};

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("chunk is empty")]
    EmptyChunk,
    #[error("splice index {i_star} outside a chunk of {horizon}")]
    SpliceOutOfRange { i_star: usize, horizon: usize },
    #[error("invalid match weights {0:?}")]
    InvalidWeights(MatchWeights),
    #[error("invalid executor config: {0}")]
    InvalidConfig(String),
}

/// Latency split in integer milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    /// Capture to planner input.
    pub input_ms: u64,
    /// Planner input to plan arrival.
    pub net_ms: u64,
    /// Command issue to effect at the actuators.
    pub exe_ms: u64,
    /// Gaussian jitter on the planner leg, ms.
    pub jitter_std_ms: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            input_ms: 33,
            net_ms: 87,
            exe_ms: 22,
            jitter_std_ms: 0.0,
        }
    }
}

impl LatencyConfig {
    pub const DEPLOYED_JITTER_STD_MS: f64 = 18.0;

    pub fn zero() -> Self {
        Self {
            input_ms: 0,
            net_ms: 0,
            exe_ms: 0,
            jitter_std_ms: 0.0,
        }
    }

    pub fn total_ms(&self) -> u64 {
        self.input_ms + self.net_ms + self.exe_ms
    }

    /// Scales the default split to a different total, keeping proportions.
    pub fn with_total(total_ms: u64) -> Self {
        let d = Self::default();
        let base = d.total_ms() as f64;
        let input_ms = (d.input_ms as f64 * total_ms as f64 / base).round() as u64;
        let exe_ms = (d.exe_ms as f64 * total_ms as f64 / base).round() as u64;
        Self {
            input_ms,
            net_ms: total_ms.saturating_sub(input_ms + exe_ms),
            exe_ms,
            jitter_std_ms: 0.0,
        }
    }

    /// Planner leg duration for one request, quantized to whole ms.
    pub fn sample_net_ms(&self, rng: &mut SimRng) -> u64 {
        if self.jitter_std_ms <= 0.0 {
            return self.net_ms;
        }
        let n = Normal::new(self.net_ms as f64, self.jitter_std_ms).expect("finite jitter");
        n.sample(rng).round().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    /// Prediction horizon `T_p`.
    pub horizon: usize,
    /// Execution horizon `T_a`.
    pub exec_horizon: usize,
    pub dt_ms: u64,
    pub substep_ms: u64,
    pub latency: LatencyConfig,
    pub matching: bool,
    pub weights: MatchWeights,
    pub v_max: f64,
    pub omega_max: f64,
    /// Gain on the gap between the planned and measured forward velocity;
    /// damps the position loop against actuator lag.
    pub velocity_gain: f64,
    /// Backward displacement that counts as a rollback, m.
    pub rollback_threshold: f64,
    /// Net forward travel for a chunk to count as forward-moving, m.
    pub forward_threshold: f64,
    pub jitter_window_ms: u64,
    pub jitter_deadband: f64,
    pub max_ticks: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            horizon: 16,
            exec_horizon: 8,
            dt_ms: 100,
            substep_ms: 10,
            latency: LatencyConfig::default(),
            matching: true,
            weights: MatchWeights::default(),
            v_max: 0.5,
            omega_max: 1.5,
            velocity_gain: 1.5,
            rollback_threshold: 0.005,
            forward_threshold: 0.01,
            jitter_window_ms: 500,
            jitter_deadband: 0.01,
            max_ticks: 1200,
        }
    }
}

impl ExecutorConfig {
    pub fn dt(&self) -> f64 {
        self.dt_ms as f64 / 1000.0
    }

    /// Ticks between a request and the swap: `ceil((input + net) / dt)`.
    pub fn lead_ticks(&self) -> usize {
        let l = self.latency.input_ms + self.latency.net_ms;
        l.div_ceil(self.dt_ms) as usize
    }

    pub fn validate(&self) -> Result<(), ExecutorError> {
        self.weights.validate()?;
        let bad = |m: &str| Err(ExecutorError::InvalidConfig(m.into()));
        if self.horizon == 0 || self.exec_horizon == 0 || self.exec_horizon > self.horizon {
            return bad("need 0 < exec_horizon <= horizon");
        }
        if self.dt_ms == 0 || self.substep_ms == 0 || !self.dt_ms.is_multiple_of(self.substep_ms) {
            return bad("dt_ms must be a positive multiple of substep_ms");
        }
        if !(self.v_max > 0.0 && self.omega_max > 0.0) {
            return bad("velocity limits must be positive");
        }
        Ok(())
    }
}

/// What the dispatcher sends to the actuators each tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub base: BaseCommand,
    /// Lateral velocity request; the plant passes it through its
    /// saturation filter.
    pub lateral: f64,
    pub hand_target: Pose3,
    pub grip_target: f64,
}

impl Command {
    pub fn hold(state: &KinState) -> Self {
        Self {
            base: BaseCommand { v: 0.0, omega: 0.0 },
            lateral: 0.0,
            hand_target: state.hand,
            grip_target: state.grip,
        }
    }
}

/// Velocity command that reaches `target` in one period from `now`.
pub fn track(now: &KinState, target: &KinState, cfg: &ExecutorConfig) -> Command {
    let dt = cfg.dt();
    let (ex, ey) = now
        .base
        .to_local(target.base.x - now.base.x, target.base.y - now.base.y);
    Command {
        base: BaseCommand {
            v: (ex / dt).clamp(-cfg.v_max, cfg.v_max),
            omega: (wrap_angle(target.base.theta - now.base.theta) / dt).clamp(-cfg.omega_max, cfg.omega_max),
        },
        lateral: ey / dt,
        hand_target: target.hand,
        grip_target: target.grip,
    }
}

/// Displacement from `now` to `target` along the current heading.
pub fn along_heading(now: &Pose2, target: &Pose2) -> f64 {
    now.to_local(target.x - now.x, target.y - now.y).0
}

/// Actuated system as seen by the dispatcher.
pub trait Plant {
    /// Atomic read of base, hand and grip.
    fn observe(&self) -> KinState;
    /// Forward base velocity, m/s.
    fn forward_velocity(&self) -> f64;
    /// Queues a command that takes effect at `effect_ms`.
    fn submit(&mut self, cmd: Command, effect_ms: u64);
    /// Integrates up to `until_ms`, applying queued commands at their effect
    /// times.
    fn advance(&mut self, until_ms: u64);
}

/// What the planner sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub state: KinState,
    /// Last executed action (hold before the first one).
    pub prev_action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("policy failure: {0}")]
pub struct PolicyError(pub String);

pub trait ChunkPolicy {
    fn plan(&mut self, obs: &Observation) -> Result<Vec<Action>, PolicyError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MonitorSignal {
    Continue,
    Stop { success: bool, reason: String },
}

/// Per-tick hook, called right after the observation is taken.
pub trait Monitor<P: ?Sized> {
    fn on_tick(&mut self, tick: u64, now_ms: u64, plant: &mut P) -> MonitorSignal;
}

/// Runs until `max_ticks`.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoMonitor;

impl<P: ?Sized> Monitor<P> for NoMonitor {
    fn on_tick(&mut self, _: u64, _: u64, _: &mut P) -> MonitorSignal {
        MonitorSignal::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub issue_ms: u64,
    pub effect_ms: u64,
    /// `(chunk id, waypoint index)`; absent for hold commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoint: Option<(u64, usize)>,
    pub base_now: Pose2,
    pub target_base: Pose2,
    pub chunk_forward: bool,
    pub rollback: bool,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequestRecord {
    pub chunk_id: u64,
    pub obs_ms: u64,
    /// When the planner receives the observation.
    pub request_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanArrivalRecord {
    pub chunk_id: u64,
    pub arrival_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceRecord {
    pub chunk_id: u64,
    pub swap_ms: u64,
    /// First activation of an episode; excluded from per-splice metrics.
    pub initial: bool,
    pub matching: bool,
    /// Net travel of the incoming chunk along its start heading, m.
    pub chunk_travel: f64,
    pub report: SpliceReport,
    pub replan: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Command(CommandRecord),
    Splice(SpliceRecord),
    PlanRequest(PlanRequestRecord),
    PlanArrival(PlanArrivalRecord),
    Stop { success: bool, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Monitor { success: bool, reason: String },
    PolicyFailure(String),
    MaxTicks,
}

/// Per-splice summary, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceSummary {
    pub tick: u64,
    pub chunk_id: u64,
    pub initial: bool,
    pub i_star: usize,
    /// Net travel of the chunk divided by its duration, m/s.
    pub chunk_speed: f64,
    pub rollbacks: usize,
    pub jitter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorRun {
    pub log: Vec<LogEvent>,
    pub splices: Vec<SpliceSummary>,
    pub rollback_count: usize,
    pub jitter_count: usize,
    /// Forward velocity at every substep boundary.
    pub velocity_trace: Vec<f64>,
    pub ticks: u64,
    pub stop: StopReason,
}

impl ExecutorRun {
    /// i* of every non-initial splice.
    pub fn i_stars(&self) -> Vec<usize> {
        self.splices.iter().filter(|s| !s.initial).map(|s| s.i_star).collect()
    }
}

/// Recounts rollbacks from the logged geometry.
pub fn rollbacks_from_log(log: &[LogEvent], threshold: f64) -> usize {
    log.iter()
        .filter(|e| match &e.event {
            Event::Command(c) => {
                c.waypoint.is_some() && c.chunk_forward && along_heading(&c.base_now, &c.target_base) < -threshold
            }
            _ => false,
        })
        .count()
}

/// Sign reversals of forward velocity (outside the dead band) inside the
/// window after `start_sample`.
pub fn count_reversals(trace: &[f64], start_sample: usize, len: usize, deadband: f64) -> usize {
    let end = (start_sample + len).min(trace.len());
    let mut last: Option<bool> = None;
    let mut n = 0;
    for v in trace.get(start_sample..end).unwrap_or(&[]) {
        if v.abs() <= deadband {
            continue;
        }
        let pos = *v > 0.0;
        if last.is_some_and(|l| l != pos) {
            n += 1;
        }
        last = Some(pos);
    }
    n
}

/// A plan that has been requested but not yet swapped in.
#[derive(Debug, Clone)]
pub(crate) struct InFlight {
    pub chunk_id: u64,
    pub arrival_ms: u64,
    pub plan: Result<ChunkPlan, PolicyError>,
}

#[derive(Debug, Clone)]
struct Active {
    id: u64,
    plan: ChunkPlan,
    cursor: usize,
    executed: usize,
    forward: bool,
}

/// Dispatcher state machine shared by the virtual and real-time loops.
pub(crate) struct Dispatcher {
    cfg: ExecutorConfig,
    lead: usize,
    active: Option<Active>,
    pending: bool,
    replan: bool,
    next_id: u64,
    prev_action: Action,
    /// Forward velocity of the segment dispatched last.
    expected_v: f64,
    started: bool,
    pub log: Vec<LogEvent>,
    pub splices: Vec<SpliceSummary>,
    rollbacks: usize,
    pub velocity_trace: Vec<f64>,
}

impl Dispatcher {
    pub fn new(cfg: ExecutorConfig) -> Result<Self, ExecutorError> {
        cfg.validate()?;
        Ok(Self {
            lead: cfg.lead_ticks(),
            cfg,
            active: None,
            pending: false,
            replan: false,
            next_id: 0,
            prev_action: Action::hold(0.0),
            expected_v: 0.0,
            started: false,
            log: Vec::new(),
            splices: Vec::new(),
            rollbacks: 0,
            velocity_trace: Vec::new(),
        })
    }

    /// Issues a request if one is due and returns the observation to plan
    /// from.
    pub fn request(&mut self, tick: u64, now_ms: u64, state: &KinState) -> Option<(u64, Observation)> {
        if self.pending {
            return None;
        }
        if !self.started {
            self.prev_action = Action::hold(state.grip);
            self.started = true;
        }
        let due = match &self.active {
            None => true,
            Some(a) => self.replan || a.cursor >= a.plan.horizon() || a.executed + self.lead >= self.cfg.exec_horizon,
        };
        if !due {
            return None;
        }
        self.pending = true;
        self.replan = false;
        let id = self.next_id;
        self.next_id += 1;
        self.log.push(LogEvent {
            tick,
            event: Event::PlanRequest(PlanRequestRecord {
                chunk_id: id,
                obs_ms: now_ms,
                request_ms: now_ms + self.cfg.latency.input_ms,
            }),
        });
        Some((
            id,
            Observation {
                t: now_ms as f64 / 1000.0,
                state: *state,
                prev_action: self.prev_action,
            },
        ))
    }

    /// Swaps in an arrived plan. Returns the policy error if the plan failed.
    pub fn arrive(
        &mut self,
        tick: u64,
        now_ms: u64,
        state: &KinState,
        arrived: InFlight,
        match_wall_us: Option<f64>,
    ) -> Result<(), PolicyError> {
        self.pending = false;
        self.log.push(LogEvent {
            tick,
            event: Event::PlanArrival(PlanArrivalRecord {
                chunk_id: arrived.chunk_id,
                arrival_ms: arrived.arrival_ms,
            }),
        });
        let plan = arrived.plan?;
        let mut report = if self.cfg.matching {
            state_match(plan.rollout(), state, &self.cfg.weights).map_err(|e| PolicyError(e.to_string()))?
        } else {
            let terms = match_terms(&plan.states[0], state, &self.cfg.weights);
            SpliceReport {
                i_star: 0,
                discarded: 0,
                terms,
                costs: vec![terms.total()],
                match_wall_us: None,
            }
        };
        report.match_wall_us = match_wall_us;
        let i_star = report.i_star;
        let sp = splice(&plan, i_star).map_err(|e| PolicyError(e.to_string()))?;
        let start = plan.states[0].base;
        let travel = along_heading(&start, &plan.states[plan.horizon()].base);
        let initial = self.active.is_none() && self.splices.is_empty();
        self.log.push(LogEvent {
            tick,
            event: Event::Splice(SpliceRecord {
                chunk_id: arrived.chunk_id,
                swap_ms: now_ms,
                initial,
                matching: self.cfg.matching,
                chunk_travel: travel,
                report,
                replan: sp.replan,
            }),
        });
        self.splices.push(SpliceSummary {
            tick,
            chunk_id: arrived.chunk_id,
            initial,
            i_star,
            chunk_speed: travel / (plan.horizon() as f64 * self.cfg.dt()),
            rollbacks: 0,
            jitter: 0,
        });
        self.replan = sp.replan;
        self.active = Some(Active {
            id: arrived.chunk_id,
            forward: travel > self.cfg.forward_threshold,
            plan,
            cursor: i_star,
            executed: 0,
        });
        Ok(())
    }

    /// Issues this tick's command.
    /// `v_now` is the measured forward velocity.
    pub fn dispatch(&mut self, tick: u64, now_ms: u64, state: &KinState, v_now: f64) -> (Command, u64) {
        let effect_ms = now_ms + self.cfg.latency.exe_ms;
        let dt = self.cfg.dt();
        let (cmd, waypoint, target_base, forward) = match self.active.as_mut() {
            Some(a) if a.cursor < a.plan.horizon() => {
                let i = a.cursor;
                let target = a.plan.states[i + 1];
                a.cursor += 1;
                a.executed += 1;
                self.prev_action = a.plan.actions[i];
                let mut cmd = track(state, &target, &self.cfg);
                cmd.base.v = (cmd.base.v + self.cfg.velocity_gain * (self.expected_v - v_now))
                    .clamp(-self.cfg.v_max, self.cfg.v_max);
                self.expected_v = self.prev_action.0[0] / dt;
                (cmd, Some((a.id, i)), target.base, a.forward)
            }
            _ => {
                self.expected_v = 0.0;
                (Command::hold(state), None, state.base, false)
            }
        };
        let rollback =
            waypoint.is_some() && forward && along_heading(&state.base, &target_base) < -self.cfg.rollback_threshold;
        if rollback {
            self.rollbacks += 1;
            if let Some(s) = self.splices.last_mut() {
                s.rollbacks += 1;
            }
        }
        self.log.push(LogEvent {
            tick,
            event: Event::Command(CommandRecord {
                issue_ms: now_ms,
                effect_ms,
                waypoint,
                base_now: state.base,
                target_base,
                chunk_forward: forward,
                rollback,
                command: cmd,
            }),
        });
        (cmd, effect_ms)
    }

    pub fn stop(&mut self, tick: u64, success: bool, reason: String) {
        self.log.push(LogEvent {
            tick,
            event: Event::Stop { success, reason },
        });
    }

    pub fn finish(mut self, ticks: u64, stop: StopReason) -> ExecutorRun {
        let per_tick = (self.cfg.dt_ms / self.cfg.substep_ms) as usize;
        let window = (self.cfg.jitter_window_ms / self.cfg.substep_ms) as usize;
        let mut total = 0;
        for s in &mut self.splices {
            if s.initial {
                continue;
            }
            s.jitter = count_reversals(
                &self.velocity_trace,
                s.tick as usize * per_tick,
                window,
                self.cfg.jitter_deadband,
            );
            total += s.jitter;
        }
        ExecutorRun {
            log: self.log,
            splices: self.splices,
            rollback_count: self.rollbacks,
            jitter_count: total,
            velocity_trace: self.velocity_trace,
            ticks,
            stop,
        }
    }
}

/// Deterministic single-clock run. The planner is invoked at request time
/// and its result is held back until `obs + input + net (+ jitter)`; the swap
/// happens on the first tick boundary at or after that instant.
pub fn run_executor<P, Pol, M>(
    policy: &mut Pol,
    plant: &mut P,
    cfg: &ExecutorConfig,
    monitor: &mut M,
    seed: u64,
) -> Result<ExecutorRun, ExecutorError>
where
    P: Plant + ?Sized,
    Pol: ChunkPolicy + ?Sized,
    M: Monitor<P> + ?Sized,
{
    let mut d = Dispatcher::new(*cfg)?;
    let mut rng = seed::stream(seed, "latency");
    let mut in_flight: Option<InFlight> = None;
    let substeps = cfg.dt_ms / cfg.substep_ms;
    for tick in 0..cfg.max_ticks {
        let now_ms = tick * cfg.dt_ms;
        if let MonitorSignal::Stop { success, reason } = monitor.on_tick(tick, now_ms, plant) {
            d.stop(tick, success, reason.clone());
            return Ok(d.finish(tick, StopReason::Monitor { success, reason }));
        }
        let state = plant.observe();
        if let Some((id, obs)) = d.request(tick, now_ms, &state) {
            let request_ms = now_ms + cfg.latency.input_ms;
            let arrival_ms = request_ms + cfg.latency.sample_net_ms(&mut rng);
            let plan = policy
                .plan(&obs)
                .and_then(|a| ChunkPlan::new(&obs.state, a, obs.t).map_err(|e| PolicyError(e.to_string())));
            in_flight = Some(InFlight {
                chunk_id: id,
                arrival_ms,
                plan,
            });
        }
        if in_flight.as_ref().is_some_and(|f| f.arrival_ms <= now_ms) {
            let f = in_flight.take().expect("checked above");
            if let Err(e) = d.arrive(tick, now_ms, &state, f, None) {
                d.stop(tick, false, e.0.clone());
                return Ok(d.finish(tick, StopReason::PolicyFailure(e.0)));
            }
        }
        let (cmd, effect_ms) = d.dispatch(tick, now_ms, &state, plant.forward_velocity());
        plant.submit(cmd, effect_ms);
        for s in 1..=substeps {
            plant.advance(now_ms + s * cfg.substep_ms);
            d.velocity_trace.push(plant.forward_velocity());
        }
    }
    let ticks = cfg.max_ticks;
    d.stop(ticks, false, "max ticks".into());
    Ok(d.finish(ticks, StopReason::MaxTicks))
}

/// One event per line.
pub fn log_to_jsonl(log: &[LogEvent]) -> Result<String, serde_json::Error> {
    crate::jsonl::to_string(log)
}
