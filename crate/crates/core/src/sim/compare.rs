//! Condition matrix runs: label frame x matching, many seeded trials each.

use serde::{Deserialize, Serialize};

use super::episode::{mean_std, run_episode, Episode, EpisodeConfig};
use super::policy::LabelFrame;
use super::SimError;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub label: LabelFrame,
    pub matching: bool,
}

impl Condition {
    /// The four ablation cells, reference condition first.
    pub const MATRIX: [Condition; 4] = [
        Condition {
            label: LabelFrame::Relative,
            matching: true,
        },
        Condition {
            label: LabelFrame::Relative,
            matching: false,
        },
        Condition {
            label: LabelFrame::Global,
            matching: true,
        },
        Condition {
            label: LabelFrame::Global,
            matching: false,
        },
    ];

    pub fn name(&self) -> String {
        format!("{}/{}", self.label.name(), if self.matching { "on" } else { "off" })
    }
}

/// One CSV row per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub scenario: String,
    pub label: LabelFrame,
    pub matching: bool,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub completion_time: f64,
    pub rollbacks: usize,
    pub jitter: usize,
    pub splices: usize,
    pub i_star_mean: f64,
    pub i_star_std: f64,
    pub tracking_rms: f64,
    pub stages_completed: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub scenario: String,
    pub label: LabelFrame,
    pub matching: bool,
    pub trials: usize,
    pub success_rate: f64,
    /// Mean completion time of successful episodes, s.
    pub mean_time: Option<f64>,
    pub rollbacks: usize,
    pub rollbacks_per_splice: f64,
    pub jitter: usize,
    pub jitter_per_splice: f64,
    pub splices: usize,
    pub i_star_mean: f64,
    pub i_star_std: f64,
    /// Count of splices per i* value.
    pub i_star_hist: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<EpisodeRow>,
    pub summary: Vec<ConditionSummary>,
}

/// Runs `n_trials` episodes per condition. Trial `k` uses the same seed in
/// every condition, so conditions are compared on identical start poses.
pub fn compare_conditions(
    base: &EpisodeConfig,
    conditions: &[Condition],
    n_trials: usize,
    master_seed: u64,
) -> Result<Comparison, SimError> {
    compare_conditions_with(base, conditions, n_trials, master_seed, |_, _, _| Ok(()))
}

/// [`compare_conditions`] with a hook that sees every finished episode,
/// e.g. to write its log.
pub fn compare_conditions_with<F>(
    base: &EpisodeConfig,
    conditions: &[Condition],
    n_trials: usize,
    master_seed: u64,
    mut on_episode: F,
) -> Result<Comparison, SimError>
where
    F: FnMut(&Condition, usize, &Episode) -> Result<(), SimError>,
{
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let scenario = base.scenario.name().to_string();
    for c in conditions {
        let mut cfg = *base;
        cfg.label = c.label;
        cfg.executor.matching = c.matching;
        let mut stars = Vec::new();
        let mut hist = vec![0usize; cfg.executor.horizon];
        let mut times = Vec::new();
        let (mut succ, mut rb, mut jit) = (0usize, 0usize, 0usize);
        for trial in 0..n_trials {
            let seed = seed::trial_seed(master_seed, trial);
            let ep = run_episode(&cfg, seed)?;
            on_episode(c, trial, &ep)?;
            for i in ep.run.i_stars() {
                stars.push(i as f64);
                hist[i] += 1;
            }
            let m = ep.metrics;
            if m.success {
                succ += 1;
                times.push(m.completion_time);
            }
            rb += m.rollbacks;
            jit += m.jitter;
            rows.push(EpisodeRow {
                scenario: scenario.clone(),
                label: c.label,
                matching: c.matching,
                trial,
                seed,
                success: m.success,
                completion_time: m.completion_time,
                rollbacks: m.rollbacks,
                jitter: m.jitter,
                splices: m.splices,
                i_star_mean: m.i_star_mean,
                i_star_std: m.i_star_std,
                tracking_rms: m.tracking_rms,
                stages_completed: m.stages_completed,
                reason: m.reason,
            });
        }
        let (i_star_mean, i_star_std) = mean_std(&stars);
        let per = |x: usize| {
            if stars.is_empty() {
                0.0
            } else {
                x as f64 / stars.len() as f64
            }
        };
        summary.push(ConditionSummary {
            scenario: scenario.clone(),
            label: c.label,
            matching: c.matching,
            trials: n_trials,
            success_rate: if n_trials == 0 {
                0.0
            } else {
                succ as f64 / n_trials as f64
            },
            mean_time: (!times.is_empty()).then(|| mean_std(&times).0),
            rollbacks: rb,
            rollbacks_per_splice: per(rb),
            jitter: jit,
            jitter_per_splice: per(jit),
            splices: stars.len(),
            i_star_mean,
            i_star_std,
            i_star_hist: hist,
        });
    }
    Ok(Comparison { rows, summary })
}

pub fn rows_to_csv(rows: &[EpisodeRow]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SimError::Io(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<EpisodeRow>, SimError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(SimError::from)).collect()
}
