use mobman_core::anchoring::{anchor_session, AnchorConfig, AnchorResult};
use mobman_core::pipeline::io::{load_session_dir, session_dirs, write_json};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::manifest::RunInfo;
use crate::AnchorArgs;

pub const ANCHOR: &str = "anchor.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionAnchor {
    pub session: String,
    pub result: AnchorResult,
}

pub fn run(a: &AnchorArgs) -> Result<RunInfo, CliError> {
    let mut cfg = AnchorConfig::default();
    if let Some(c) = a.cov_threshold {
        cfg.cov_threshold = c;
    }
    let dirs = session_dirs(&a.session)?;
    if dirs.is_empty() {
        return Err(CliError::Usage(format!(
            "no session directories under {}",
            a.session.display()
        )));
    }
    let mut out = Vec::new();
    for dir in &dirs {
        let s = load_session_dir(dir)?;
        let result = anchor_session(&s.chest, &s.hand, &s.extrinsics, &s.detections, &cfg)
            .map_err(|e| CliError::Rejected(format!("session {}: {e}", s.id)))?;
        for n in [&result.chest, &result.hand] {
            println!(
                "{} {:?}: {} detections ({} rejected), residual rms {:.2} mm / {:.3} deg",
                s.id,
                n.node,
                n.detection_count,
                n.rejected_count,
                n.residual.position_rms_m * 1e3,
                n.residual.rotation_rms_rad.to_degrees()
            );
        }
        out.push(SessionAnchor { session: s.id, result });
    }
    write_json(&a.out.join(ANCHOR), &out)?;
    Ok(RunInfo {
        config: json!({ "anchor": cfg }),
        inputs: vec![a.session.clone()],
        ..RunInfo::default()
    })
}
