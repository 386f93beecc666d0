use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::{find_runs, RunManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: String,
    pub command: String,
    pub config_hash: String,
    pub passed: bool,
    pub artifacts: usize,
    /// Artifacts whose digest no longer matches.
    pub corrupted: Vec<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: Vec<RunSummary>,
    pub all_passed: bool,
    pub all_verified: bool,
}

impl AggregateReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        for r in &self.runs {
            let status = if r.passed { "pass" } else { "FAIL" };
            let integrity = if r.corrupted.is_empty() {
                "digests ok".to_string()
            } else {
                format!("{} corrupted", r.corrupted.len())
            };
            s.push_str(&format!(
                "{status:<5} {:<12} {:<40} {} artifacts, {integrity}, {:.2} s\n",
                r.command, r.dir, r.artifacts, r.wall_clock_seconds
            ));
        }
        s
    }
}

/// Reads every manifest below `root` and re-verifies its digests.
pub fn run_report(root: &Path) -> Result<AggregateReport> {
    let mut runs = Vec::new();
    for dir in find_runs(root)? {
        let m = RunManifest::read(&dir)?;
        let corrupted = m.verify(&dir)?;
        runs.push(RunSummary {
            dir: dir.strip_prefix(root).unwrap_or(&dir).display().to_string(),
            command: m.command,
            config_hash: m.config_hash,
            passed: m.passed,
            artifacts: m.artifacts.len(),
            corrupted,
            wall_clock_seconds: m.wall_clock_seconds,
        });
    }
    Ok(AggregateReport {
        all_passed: runs.iter().all(|r| r.passed),
        all_verified: runs.iter().all(|r| r.corrupted.is_empty()),
        runs,
    })
}
