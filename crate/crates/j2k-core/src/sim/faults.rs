//! Scripted fault injection, loaded from a YAML list of
//! `{tick, action, deployment, ...}` entries with non-decreasing ticks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FaultScriptError {
    #[error("malformed fault script: {0}")]
    Malformed(#[from] serde_yaml::Error),
    #[error("fault script ticks must be non-decreasing (entry {index} has tick {tick} after {previous})")]
    TicksOutOfOrder {
        index: usize,
        tick: u64,
        previous: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum FaultAction {
    /// Marks `count` pods of the deployment as failed, lowest uid first.
    KillPod { deployment: String, count: u32 },
    /// Makes one pod (ordinal in uid order) fail its liveness probe for the
    /// given number of ticks.
    FailLiveness {
        deployment: String,
        pod_ordinal: u32,
        duration_ticks: u64,
    },
    /// Sets the observed CPU utilization of the deployment's pods.
    SetCpu { deployment: String, percent: u32 },
    /// Starts a rolling update to a new image tag.
    TriggerRollingUpdate { deployment: String, new_tag: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEntry {
    pub tick: u64,
    #[serde(flatten)]
    pub action: FaultAction,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultScript {
    pub entries: Vec<FaultEntry>,
}

impl FaultScript {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(entries: Vec<FaultEntry>) -> Result<Self, FaultScriptError> {
        check_order(&entries)?;
        Ok(Self { entries })
    }

    pub fn parse(text: &str) -> Result<Self, FaultScriptError> {
        if text.trim().is_empty() {
            return Ok(Self::empty());
        }
        let entries: Vec<FaultEntry> = serde_yaml::from_str(text)?;
        Self::new(entries)
    }
}

fn check_order(entries: &[FaultEntry]) -> Result<(), FaultScriptError> {
    for (index, pair) in entries.windows(2).enumerate() {
        if pair[1].tick < pair[0].tick {
            return Err(FaultScriptError::TicksOutOfOrder {
                index: index + 1,
                tick: pair[1].tick,
                previous: pair[0].tick,
            });
        }
    }
    Ok(())
}
