//! Wall-clock mode: the planner runs on its own thread and the dispatcher
//! sleeps between ticks. The ordering contract is the same as in virtual
//! mode (one plan in flight, swaps only on tick boundaries); only the timing
//! of arrivals is measured instead of simulated.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::{
    ChunkPlan, ChunkPolicy, Dispatcher, ExecutorConfig, ExecutorError, ExecutorRun, InFlight, Monitor, MonitorSignal,
    Observation, Plant, PolicyError, StopReason,
};
use crate::seed;

struct Request {
    id: u64,
    obs: Observation,
    request_ms: u64,
}

/// `wall_per_virtual` scales the clock: 1.0 runs in real time, 0.1 ten
/// times faster.
pub fn run_executor_realtime<P, Pol, M>(
    policy: &mut Pol,
    plant: &mut P,
    cfg: &ExecutorConfig,
    monitor: &mut M,
    seed: u64,
    wall_per_virtual: f64,
) -> Result<ExecutorRun, ExecutorError>
where
    P: Plant + ?Sized,
    Pol: ChunkPolicy + Send + ?Sized,
    M: Monitor<P> + ?Sized,
{
    if !(wall_per_virtual > 0.0) {
        return Err(ExecutorError::InvalidConfig("time scale must be positive".into()));
    }
    let mut d = Dispatcher::new(*cfg)?;
    let start = Instant::now();
    let to_wall = |ms: u64| Duration::from_secs_f64(ms as f64 * wall_per_virtual / 1000.0);
    let virtual_now = move || (start.elapsed().as_secs_f64() * 1000.0 / wall_per_virtual) as u64;
    let (req_tx, req_rx) = mpsc::channel::<Request>();
    let (plan_tx, plan_rx) = mpsc::channel::<InFlight>();
    let latency = cfg.latency;

    thread::scope(|scope| {
        scope.spawn(move || {
            let mut rng = seed::stream(seed, "latency");
            for r in req_rx {
                let target = r.request_ms + latency.sample_net_ms(&mut rng);
                let plan = policy
                    .plan(&r.obs)
                    .and_then(|a| ChunkPlan::new(&r.obs.state, a, r.obs.t).map_err(|e| PolicyError(e.to_string())));
                let now = virtual_now();
                if target > now {
                    thread::sleep(to_wall(target - now));
                }
                let msg = InFlight {
                    chunk_id: r.id,
                    arrival_ms: virtual_now().max(target),
                    plan,
                };
                if plan_tx.send(msg).is_err() {
                    break;
                }
            }
        });

        let substeps = cfg.dt_ms / cfg.substep_ms;
        let mut outcome = None;
        for tick in 0..cfg.max_ticks {
            let now_ms = tick * cfg.dt_ms;
            let elapsed = virtual_now();
            if now_ms > elapsed {
                thread::sleep(to_wall(now_ms - elapsed));
            }
            if let MonitorSignal::Stop { success, reason } = monitor.on_tick(tick, now_ms, plant) {
                d.stop(tick, success, reason.clone());
                outcome = Some((tick, StopReason::Monitor { success, reason }));
                break;
            }
            let state = plant.observe();
            if let Some((id, obs)) = d.request(tick, now_ms, &state) {
                let req = Request {
                    id,
                    obs,
                    request_ms: now_ms + cfg.latency.input_ms,
                };
                if req_tx.send(req).is_err() {
                    break;
                }
            }
            // the planner may finish slightly after the tick instant; anything
            // that arrived before the boundary is swapped in now
            if let Ok(f) = plan_rx.try_recv() {
                let t0 = Instant::now();
                let arrived = InFlight {
                    arrival_ms: f.arrival_ms.min(now_ms),
                    ..f
                };
                let wall = t0.elapsed().as_secs_f64() * 1e6;
                if let Err(e) = d.arrive(tick, now_ms, &state, arrived, Some(wall)) {
                    d.stop(tick, false, e.0.clone());
                    outcome = Some((tick, StopReason::PolicyFailure(e.0)));
                    break;
                }
            }
            let (cmd, effect_ms) = d.dispatch(tick, now_ms, &state, plant.forward_velocity());
            plant.submit(cmd, effect_ms);
            for s in 1..=substeps {
                plant.advance(now_ms + s * cfg.substep_ms);
                d.velocity_trace.push(plant.forward_velocity());
            }
        }
        drop(req_tx);
        let (ticks, stop) = outcome.unwrap_or_else(|| {
            d.stop(cfg.max_ticks, false, "max ticks".into());
            (cfg.max_ticks, StopReason::MaxTicks)
        });
        Ok(d.finish(ticks, stop))
    })
}
