//! Simulator event log: append-only, strictly ordered by `(tick, seq)`,
//! exported as JSON lines.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    PodCreated,
    PodRunning,
    PodKilled,
    PodReplaced,
    PodRemoved,
    LivenessProbeFailed,
    LivenessRestart,
    RollingUpdateStarted,
    RollingUpdateComplete,
    HpaScale,
    StepStarted,
    StepCompleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub tick: u64,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deployment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pod: Option<String>,
    pub detail: String,
}

/// One JSON object per line, in log order.
pub fn to_jsonl(events: &[SimEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("event serializes"));
        out.push('\n');
    }
    out
}
