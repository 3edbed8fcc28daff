//! Run report: everything a run produced, in a deterministic order.

use serde::{Deserialize, Serialize};

use crate::cart::TraceEntry;
use crate::gate::Verdict;
use crate::store::{Db, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Fault,
    DeadlineExceeded,
    Violation,
}

impl Outcome {
    /// Process exit status for `run`.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Fault | Outcome::DeadlineExceeded => 3,
            Outcome::Violation => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub at: u64,
    pub view: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    pub ascii: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartReport {
    pub id: String,
    pub final_phase: String,
    pub retries: u32,
    pub conflicts: u32,
    pub trace: Vec<TraceEntry>,
    pub frames: Vec<FrameRecord>,
}

impl CartReport {
    /// Checkout-walkthrough stage numbers of the rendered frames, consecutive repeats
    /// collapsed.
    pub fn stages(&self) -> Vec<u8> {
        let mut out: Vec<u8> = Vec::new();
        for s in self.frames.iter().filter_map(|f| f.stage) {
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    /// The last frame shown at a given stage.
    pub fn frame_at_stage(&self, stage: u8) -> Option<&FrameRecord> {
        self.frames.iter().rev().find(|f| f.stage == Some(stage))
    }

    pub fn phases(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.trace {
            if out.last() != Some(&t.phase.as_str()) {
                out.push(&t.phase);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRecord {
    pub at: u64,
    pub lane: String,
    pub uid: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub cart: String,
    pub user: String,
    pub started_at: u64,
    pub ended_at: u64,
    pub duration_ms: u64,
    pub total: i64,
    pub items: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub sessions: usize,
    pub mean_checkout_ms: u64,
    pub alarms: usize,
    /// 409 replies seen by carts (each one triggers a retry path).
    pub conflicts_retried: u64,
    /// 409 replies issued by the store.
    pub store_conflicts: u64,
    pub net_retries: u64,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRecord {
    pub id: String,
    pub rev: String,
    pub deleted: bool,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreDump {
    pub users: Vec<DocRecord>,
    pub tags: Vec<DocRecord>,
}

impl StoreDump {
    pub fn of(store: &Store) -> Self {
        let dump = |db| {
            store
                .records(db)
                .into_iter()
                .map(|d| DocRecord {
                    id: d.id,
                    rev: d.rev.to_string(),
                    deleted: d.deleted,
                    body: d.body.to_canonical_string(),
                })
                .collect()
        };
        Self {
            users: dump(Db::Users),
            tags: dump(Db::Tags),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub end_ms: u64,
    pub carts: Vec<CartReport>,
    pub gates: Vec<GateRecord>,
    pub sessions: Vec<SessionRecord>,
    pub metrics: Metrics,
    pub store: StoreDump,
    pub violations: Vec<String>,
    /// Entities that had not settled when the run stopped.
    pub stuck: Vec<String>,
}

impl SimReport {
    pub fn cart(&self, id: &str) -> Option<&CartReport> {
        self.carts.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
