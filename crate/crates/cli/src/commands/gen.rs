use std::path::Path;

use mobman_core::jsonl;
use mobman_core::pipeline::io::{write_json, write_session_dir, GROUND_TRUTH};
use mobman_core::seed;
use mobman_core::sim::{scripted_expert, DemoOptions};
use mobman_core::{Pose2, Pose3};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::manifest::RunInfo;
use crate::{GenArgs, Noise};

pub const CALIB: &str = "calib.json";
pub const TRUTH: &str = "truth.json";

#[derive(Serialize)]
struct Truth {
    chest_world_from_hand_world: Pose3,
    board_world: Pose3,
    start: Pose2,
}

pub fn run(a: &GenArgs) -> Result<RunInfo, CliError> {
    let mut opts = match a.noise {
        Noise::None => DemoOptions::default(),
        Noise::Noisy => DemoOptions::noisy(),
    };
    opts.cov_spike = a.cov_spike;
    let mut seeds = Vec::new();
    for k in 0..a.count {
        let s = if a.count == 1 {
            a.seed
        } else {
            seed::trial_seed(a.seed, k as usize)
        };
        seeds.push(s);
        let demo = scripted_expert(a.scenario, s, &opts)?;
        let dir = if a.count == 1 {
            a.out.clone()
        } else {
            a.out.join(format!("session_{k:03}"))
        };
        let mut files = demo.files.clone();
        files.id = format!("{}-{s}", a.scenario.name());
        write_session_dir(&dir, &files)?;
        write_json(&dir.join(CALIB), &demo.calib)?;
        write_json(
            &dir.join(TRUTH),
            &Truth {
                chest_world_from_hand_world: demo.chest_world_from_hand_world,
                board_world: demo.board_world,
                start: demo.start,
            },
        )?;
        jsonl::write(&dir.join(GROUND_TRUTH), &demo.truth)?;
        println!("{}: {} steps -> {}", files.id, demo.truth.len(), show(&dir));
    }
    Ok(RunInfo {
        config: json!({ "scenario": a.scenario, "count": a.count, "options": opts }),
        seeds,
        ..RunInfo::default()
    })
}

pub fn show(p: &Path) -> String {
    p.display().to_string()
}
