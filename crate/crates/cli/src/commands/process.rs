use std::collections::BTreeMap;

use mobman_core::action::Action;
use mobman_core::jsonl;
use mobman_core::pipeline::filter::{lateral_quantile, project_nonholonomic};
use mobman_core::pipeline::io::{load_session_dir, read_json, session_dirs, write_json};
use mobman_core::pipeline::{
    assemble_dataset, make_action_labels, DemoStep, GripperCalib, PipelineConfig, PipelineError, QualityReport,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::anchor::SessionAnchor;
use super::gen::CALIB;
use crate::error::CliError;
use crate::manifest::RunInfo;
use crate::ProcessArgs;

pub const DATASET: &str = "dataset.jsonl";
pub const REPORT: &str = "report.json";

/// One dataset line: a 10 Hz step and the action leading to the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub session: String,
    pub index: usize,
    #[serde(flatten)]
    pub step: DemoStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionReport {
    quality: QualityReport,
    steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    lateral_q99: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProcessReport {
    accepted: usize,
    rejected: usize,
    sessions: Vec<SessionReport>,
}

pub fn run(a: &ProcessArgs) -> Result<RunInfo, CliError> {
    let mut cfg = PipelineConfig::default();
    if a.no_smooth {
        cfg.savgol_window = None;
    }
    let anchors: Vec<SessionAnchor> = read_json(&a.anchor)?;
    let anchors: BTreeMap<_, _> = anchors.into_iter().map(|s| (s.session, s.result)).collect();
    let shared_calib = a.calib.as_deref().map(read_json::<GripperCalib>).transpose()?;
    let dirs = session_dirs(&a.raw)?;
    if dirs.is_empty() {
        return Err(CliError::Usage(format!(
            "no session directories under {}",
            a.raw.display()
        )));
    }
    let mut records = Vec::new();
    let mut sessions = Vec::new();
    let mut inputs = vec![a.raw.clone(), a.anchor.clone()];
    inputs.extend(a.calib.clone());
    for dir in &dirs {
        let files = load_session_dir(dir)?;
        let anchor = anchors
            .get(&files.id)
            .ok_or_else(|| CliError::Usage(format!("no anchor for session {}", files.id)))?;
        let calib = match shared_calib {
            Some(c) => c,
            None if dir.join(CALIB).is_file() => read_json(&dir.join(CALIB))?,
            None => GripperCalib::default(),
        };
        let id = files.id.clone();
        let session = files.into_raw(anchor.chest_world_from_hand_world);
        match assemble_dataset(&session, &calib, &cfg) {
            Ok(ds) => {
                let labels = make_action_labels(&ds.steps)?;
                let base: Vec<_> = ds.steps.iter().map(|s| s.base).collect();
                let proj = project_nonholonomic(&base, 1.0 / cfg.rate_hz);
                let q = lateral_quantile(&proj.lateral, 0.99)?;
                println!("{id}: accepted, {} steps, lateral q0.99 = {q:.4} m/s", ds.steps.len());
                for (i, step) in ds.steps.iter().enumerate() {
                    records.push(DatasetRecord {
                        session: id.clone(),
                        index: i,
                        step: step.clone(),
                        action: labels.get(i).copied(),
                    });
                }
                sessions.push(SessionReport {
                    quality: ds.report,
                    steps: ds.steps.len(),
                    lateral_q99: Some(q),
                });
            }
            Err(PipelineError::Rejected(report)) => {
                let why: Vec<_> = report
                    .reasons
                    .iter()
                    .map(|r| {
                        serde_json::to_value(r)
                            .ok()
                            .and_then(|v| v["rule"].as_str().map(String::from))
                    })
                    .map(|r| r.unwrap_or_default())
                    .collect();
                println!("{id}: rejected ({})", why.join(", "));
                sessions.push(SessionReport {
                    quality: report,
                    steps: 0,
                    lateral_q99: None,
                });
            }
            Err(e) => return Err(CliError::from(e)),
        }
    }
    let accepted = sessions.iter().filter(|s| s.quality.accepted).count();
    let report = ProcessReport {
        accepted,
        rejected: sessions.len() - accepted,
        sessions,
    };
    jsonl::write(&a.out.join(DATASET), &records)?;
    write_json(&a.out.join(REPORT), &report)?;
    Ok(RunInfo {
        config: json!({ "pipeline": cfg, "calib": shared_calib }),
        inputs,
        rejected: (accepted == 0).then(|| "every session was rejected by the quality filter".to_string()),
        ..RunInfo::default()
    })
}
