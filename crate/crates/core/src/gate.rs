//! Anti-theft gate: a tag passing the exit alarms iff its document is still
//! live in the tag database. The gate only ever reads.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::store::{valid_doc_id, Store};
use crate::wire::{HttpRequest, HttpResponse, Method};

/// Anything that can answer a store request: the in-process store, a TCP
/// client, or a simulated network.
pub trait StoreClient {
    fn request(&mut self, req: &HttpRequest) -> Result<HttpResponse, String>;
}

impl StoreClient for &Store {
    fn request(&mut self, req: &HttpRequest) -> Result<HttpResponse, String> {
        Ok(self.handle_request(req))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEvent {
    pub at: u64,
    pub lane: String,
    pub uid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Alarm,
}

/// One alarm-log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub at: u64,
    pub lane: String,
    pub uid: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

pub fn tag_request(uid: &str) -> HttpRequest {
    HttpRequest::new(Method::Get, format!("/tags/{uid}"))
}

/// Classifies the store's answer to [`tag_request`].
pub fn verdict_for(result: Result<&HttpResponse, &str>) -> (Verdict, Option<String>) {
    match result {
        Ok(resp) if resp.status == 200 => (Verdict::Alarm, Some("unpaid".into())),
        Ok(resp) if resp.status == 404 => (Verdict::Pass, None),
        Ok(resp) => (
            Verdict::Alarm,
            Some(format!("fail-closed: status {}", resp.status)),
        ),
        Err(e) => (Verdict::Alarm, Some(format!("fail-closed: {e}"))),
    }
}

pub fn check_tag(event: &GateEvent, client: &mut dyn StoreClient) -> GateVerdict {
    let (verdict, reason) = if valid_doc_id(&event.uid) {
        let result = client.request(&tag_request(&event.uid));
        verdict_for(result.as_ref().map_err(String::as_str))
    } else {
        (Verdict::Alarm, Some("fail-closed: unreadable uid".into()))
    };
    GateVerdict {
        at: event.at,
        lane: event.lane.clone(),
        uid: event.uid.clone(),
        verdict,
        reason,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub passes: usize,
    pub alarms: usize,
}

/// Reads gate events as JSON lines and writes one verdict line per event.
/// Blank lines are skipped; a line that does not parse is an error.
pub fn process_stream(
    input: impl BufRead,
    client: &mut dyn StoreClient,
    mut log: impl Write,
) -> io::Result<StreamSummary> {
    let mut summary = StreamSummary::default();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: GateEvent = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        let verdict = check_tag(&event, client);
        match verdict.verdict {
            Verdict::Pass => summary.passes += 1,
            Verdict::Alarm => summary.alarms += 1,
        }
        serde_json::to_writer(&mut log, &verdict)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;
    Ok(summary)
}
