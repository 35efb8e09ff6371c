use serde::Serialize;

use itolions::harness::CheckOutcome;

/// Everything needed to reproduce a run: the effective config, its seed and
/// the tool version.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_path: String,
    /// The effective config (after `--seed`), as TOML.
    pub config: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    pub warnings: Vec<String>,
}

pub fn timestamp(t: chrono::DateTime<chrono::Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
