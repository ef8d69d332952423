use std::collections::BTreeMap;
use std::fs;

use mobman_core::action::{Action, ACTION_DIM};
use mobman_core::diffusion::condition::{PREV_ACTION_WIDTH, STATE_WIDTH};
use mobman_core::diffusion::{
    cosine_schedule, obs_to_condition, train_toy, Checkpoint, ConditionLayout, ToyExample, TrainConfig,
    CHECKPOINT_FORMAT,
};
use serde::Serialize;
use serde_json::{json, Value};

use super::process::DatasetRecord;
use crate::error::CliError;
use crate::manifest::RunInfo;
use crate::TrainArgs;

pub const CHECKPOINT: &str = "checkpoint.json";
pub const CURVE: &str = "training_curve.csv";

#[derive(Serialize)]
struct CurveRow {
    step: usize,
    loss: f64,
}

/// Chunk examples from a processed dataset: condition on the step's state
/// and the previous action, target the next `horizon` actions, padded with
/// holds at the end of a session.
fn chunk_examples(records: &[DatasetRecord], horizon: usize) -> Vec<ToyExample> {
    let mut sessions: BTreeMap<&str, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        sessions.entry(&r.session).or_default().push(r);
    }
    let mut out = Vec::new();
    for steps in sessions.values_mut() {
        steps.sort_by_key(|r| r.index);
        let actions: Vec<Action> = steps.iter().filter_map(|r| r.action).collect();
        for (i, r) in steps.iter().enumerate() {
            let Some(_) = r.action else { continue };
            let hold = Action::hold(r.step.grip);
            let prev = if i == 0 { hold } else { actions[i - 1] };
            let cond = obs_to_condition(&r.step.state(), &prev, &[]);
            let a0 = (0..horizon)
                .flat_map(|j| actions.get(i + j).copied().unwrap_or(hold).0)
                .collect();
            out.push(ToyExample { cond: cond.0, a0 });
        }
    }
    out
}

fn load_examples(a: &TrainArgs) -> Result<(Vec<ToyExample>, usize, ConditionLayout), CliError> {
    let text = fs::read_to_string(&a.dataset).map_err(|e| CliError::Usage(format!("{}: {e}", a.dataset.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let Some(first) = first else {
        return Err(CliError::Usage(format!("{}: dataset is empty", a.dataset.display())));
    };
    let probe: Value =
        serde_json::from_str(first).map_err(|e| CliError::Usage(format!("{}:1: {e}", a.dataset.display())))?;
    if probe.get("a0").is_some() {
        let ex: Vec<ToyExample> = mobman_core::jsonl::read(&a.dataset)?;
        let cond = ex[0].cond.len();
        if ex.iter().any(|e| e.cond.len() != cond || e.a0.len() != ex[0].a0.len()) {
            return Err(CliError::Usage("examples have inconsistent widths".into()));
        }
        let layout = ConditionLayout::new(cond.saturating_sub(STATE_WIDTH + PREV_ACTION_WIDTH + 1));
        let horizon = (ex[0].a0.len() / ACTION_DIM).max(1);
        return Ok((ex, horizon, layout));
    }
    let records: Vec<DatasetRecord> = mobman_core::jsonl::read(&a.dataset)?;
    let ex = chunk_examples(&records, a.horizon);
    if ex.is_empty() {
        return Err(CliError::Usage(format!("{}: no labelled steps", a.dataset.display())));
    }
    Ok((ex, a.horizon, ConditionLayout::new(0)))
}

pub fn run(a: &TrainArgs) -> Result<RunInfo, CliError> {
    if a.batch_size == 0 || a.steps == 0 || a.hidden == 0 || a.horizon == 0 {
        return Err(CliError::Usage(
            "steps, batch size, hidden width and horizon must be positive".into(),
        ));
    }
    let (examples, horizon, condition) = load_examples(a)?;
    let schedule = cosine_schedule(a.schedule_steps)?;
    let cfg = TrainConfig {
        steps: a.steps,
        batch_size: a.batch_size,
        lr: a.lr,
        ema_decay: a.ema_decay,
        hidden: a.hidden,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let (model, report) = train_toy(&examples, &schedule, &cfg)?;
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        schedule_steps: a.schedule_steps,
        horizon,
        condition,
        train: cfg,
        final_loss: report.losses.last().copied(),
        model,
    };
    ckpt.save(&a.out.join(CHECKPOINT))?;
    let mut w = csv::Writer::from_path(a.out.join(CURVE))?;
    for (step, loss) in report.losses.iter().enumerate() {
        w.serialize(CurveRow { step, loss: *loss })?;
    }
    w.flush()?;
    println!(
        "{} examples, {} steps, final loss {:.5}",
        examples.len(),
        cfg.steps,
        ckpt.final_loss.unwrap_or(f64::NAN)
    );
    Ok(RunInfo {
        config: json!({ "train": cfg, "schedule_steps": a.schedule_steps, "horizon": horizon, "examples": examples.len() }),
        seeds: vec![a.seed],
        inputs: vec![a.dataset.clone()],
        ..RunInfo::default()
    })
}
