use crate::error::CliError;
use crate::manifest::{self, RunManifest};
use crate::{execute, Command};

/// Reruns the manifest's command into `out` and checks every output hash.
pub fn run(a: &crate::ReplayArgs) -> Result<RunManifest, CliError> {
    let original = manifest::read(&a.manifest)?;
    let mut cmd: Command = serde_json::from_value(original.args.clone())
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.manifest.display())))?;
    if matches!(cmd, Command::Replay(_)) {
        return Err(CliError::Usage("cannot replay a replay".into()));
    }
    if original.artifact_version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, replaying with {}",
            original.artifact_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    cmd.set_out(a.out.clone());
    let fresh = match execute(&cmd) {
        Ok(m) => m,
        // a rejected run still reproduces if it was rejected before
        Err(CliError::Rejected(_)) if original.status != "ok" => manifest::read(&a.out.join(manifest::MANIFEST))?,
        Err(e) => return Err(e),
    };
    let mut diffs = Vec::new();
    if fresh.inputs != original.inputs {
        diffs.push("inputs changed since the original run".to_string());
    }
    for h in &original.outputs {
        match fresh.outputs.iter().find(|f| f.path == h.path) {
            Some(f) if f.sha256 == h.sha256 => {}
            Some(_) => diffs.push(format!("{} differs", h.path)),
            None => diffs.push(format!("{} missing", h.path)),
        }
    }
    for f in &fresh.outputs {
        if !original.outputs.iter().any(|h| h.path == f.path) {
            diffs.push(format!("{} is new", f.path));
        }
    }
    if diffs.is_empty() {
        println!("{} outputs reproduced byte for byte", original.outputs.len());
        Ok(fresh)
    } else {
        Err(CliError::Rejected(diffs.join("; ")))
    }
}
