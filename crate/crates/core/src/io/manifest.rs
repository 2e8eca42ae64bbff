use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::pipeline::WarpTrace;

/// An input file and its content digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub aae_degrees: f64,
    pub epe_pixels: f64,
}

/// Everything needed to replay and audit one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: SolverConfig,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub traces: Vec<WarpTrace>,
    #[serde(default)]
    pub metrics: Option<RunMetrics>,
    /// Wall-clock durations in seconds, by stage name.
    pub timings: BTreeMap<String, f64>,
}
