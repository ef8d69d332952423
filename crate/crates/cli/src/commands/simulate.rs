use std::fs;

use mobman_core::executor::{log_to_jsonl, LatencyConfig};
use mobman_core::pipeline::io::write_json;
use mobman_core::sim::{compare_conditions_with, rows_to_csv, Condition, EpisodeConfig, ScenarioId, SimError};
use serde_json::{json, Value};

use crate::aggregate::{Aggregate, AGGREGATE, EPISODES};
use crate::error::CliError;
use crate::manifest::RunInfo;
use crate::{OnOff, SimulateArgs};

/// Overlays `patch` onto `base`, object keys recursively.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn episode_config(a: &SimulateArgs) -> Result<EpisodeConfig, CliError> {
    let mut cfg = EpisodeConfig::new(ScenarioId::NavTurnPlace);
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut v = serde_json::to_value(cfg)?;
        merge(&mut v, patch);
        cfg = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(s) = a.scenario {
        cfg.scenario = s;
    }
    if let Some(l) = a.label {
        cfg.label = l;
    }
    if let Some(m) = a.matching {
        cfg.executor.matching = m == OnOff::On;
    }
    if let Some(ms) = a.latency_ms {
        let jitter = cfg.executor.latency.jitter_std_ms;
        cfg.executor.latency = LatencyConfig {
            jitter_std_ms: jitter,
            ..LatencyConfig::with_total(ms)
        };
    }
    if let Some(j) = a.jitter_ms {
        if !(j.is_finite() && j >= 0.0) {
            return Err(CliError::Usage(format!(
                "jitter must be a non-negative number of ms, got {j}"
            )));
        }
        cfg.executor.latency.jitter_std_ms = j;
    }
    cfg.executor.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(a: &SimulateArgs) -> Result<RunInfo, CliError> {
    let cfg = episode_config(a)?;
    let conditions: Vec<Condition> = if a.matrix {
        Condition::MATRIX.to_vec()
    } else {
        vec![Condition {
            label: cfg.label,
            matching: cfg.executor.matching,
        }]
    };
    let trials = a.trials as usize;
    let logs = a.out.join("logs");
    let cmp = compare_conditions_with(&cfg, &conditions, trials, a.seed, |c, trial, ep| {
        if !a.logs {
            return Ok(());
        }
        let dir = logs.join(c.name().replace('/', "_"));
        fs::create_dir_all(&dir).map_err(|e| SimError::Io(e.to_string()))?;
        let text = log_to_jsonl(ep.log()).map_err(|e| SimError::Io(e.to_string()))?;
        fs::write(dir.join(format!("trial_{trial:03}.jsonl")), text).map_err(|e| SimError::Io(e.to_string()))
    })?;
    fs::write(a.out.join(EPISODES), rows_to_csv(&cmp.rows)?)?;
    let agg = Aggregate {
        scenario: cfg.scenario.name().into(),
        latency: cfg.executor.latency,
        trials,
        seed: a.seed,
        conditions: cmp.summary,
    };
    write_json(&a.out.join(AGGREGATE), &agg)?;
    println!(
        "{} at {} ms, {} trials per condition",
        agg.scenario,
        agg.latency.total_ms(),
        trials
    );
    for s in &agg.conditions {
        let c = Condition {
            label: s.label,
            matching: s.matching,
        };
        println!(
            "  {:<13} success {:>5.1}%  rollbacks {:>5}  jitter {:>5}  i* {:.2} ± {:.2}",
            c.name(),
            100.0 * s.success_rate,
            s.rollbacks,
            s.jitter,
            s.i_star_mean,
            s.i_star_std
        );
    }
    let seeds = (0..trials).map(|k| mobman_core::seed::trial_seed(a.seed, k)).collect();
    Ok(RunInfo {
        config: json!({ "episode": cfg, "conditions": conditions, "trials": trials, "policy": a.policy }),
        seeds,
        inputs: a.config.iter().cloned().collect(),
        ..RunInfo::default()
    })
}
