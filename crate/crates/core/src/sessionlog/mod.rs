//! Search session logs: ingest, canonical form, and per-session statistics.
//!
//! A log is a list of sessions; a session is a list of timed interactions
//! (query plus ranked results), each with zero or more clicks on results.
//! Logs arrive either as session-track-style XML ([`parse_xml_str`]) or as
//! the canonical JSON interchange form ([`from_canonical_json`]). All
//! analysis code works on the canonical types below.
//!
//! Timestamps are seconds from session start. Clicks reference documents by
//! docid; a click's document is expected to appear in some SERP of the
//! session, but glitchy logs that violate this are accepted and handled
//! downstream.

mod synth;
mod xml;

pub use synth::{synthesize_log, LogSynthConfig, TopicQueries};
pub use xml::parse_xml_str;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Format version of the canonical JSON form.
pub const CANONICAL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionLogError {
    #[error("xml parse error at line {line}, column {col}: {msg}")]
    Xml { line: usize, col: usize, msg: String },
    #[error("schema error in <{element}>: {detail}")]
    Schema { element: String, detail: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported log version {found} (this build reads version {CANONICAL_VERSION})")]
    Version { found: u32 },
    #[error("duplicate session id {id:?}")]
    DuplicateSessionId { id: String },
    #[error("cannot synthesize a log from an empty query pool")]
    EmptyQueryPool,
    #[error("cannot synthesize a log over an empty corpus")]
    EmptyCorpus,
}

/// Whether an interaction opened the session's line of inquiry or revised it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Initial,
    Reformulate,
}

/// One ranked entry of a SERP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rank: u32,
    pub docid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
}

/// A click on a result page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub docid: String,
    pub starttime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endtime_s: Option<f64>,
}

/// A query issued at a point in time, with the SERP shown and clicks made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub num: u32,
    pub starttime_s: f64,
    pub kind: InteractionKind,
    pub query: String,
    #[serde(default)]
    pub results: Vec<ResultEntry>,
    #[serde(default)]
    pub clicks: Vec<Click>,
}

/// One user's search session: at least one interaction, sorted by start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub interactions: Vec<Interaction>,
}

/// A collection of sessions plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub sessions: Vec<Session>,
}

fn default_version() -> u32 {
    CANONICAL_VERSION
}

impl SessionLog {
    pub fn new(sessions: Vec<Session>) -> SessionLog {
        SessionLog { version: CANONICAL_VERSION, source: None, sessions }
    }
}

/// Serializes a log to the canonical JSON form: pretty-printed, fixed key
/// order, trailing newline. Byte-identical for equal logs.
pub fn to_canonical_json(log: &SessionLog) -> String {
    let mut s = serde_json::to_string_pretty(log).expect("session log serializes");
    s.push('\n');
    s
}

/// Reads the canonical JSON form. Rejects unknown versions and duplicate
/// session ids; ignores unknown fields.
pub fn from_canonical_json(json: &str) -> Result<SessionLog, SessionLogError> {
    let log: SessionLog = serde_json::from_str(json)?;
    if log.version != CANONICAL_VERSION {
        return Err(SessionLogError::Version { found: log.version });
    }
    let mut seen = BTreeSet::new();
    for session in &log.sessions {
        if !seen.insert(session.id.as_str()) {
            return Err(SessionLogError::DuplicateSessionId { id: session.id.clone() });
        }
        if session.interactions.is_empty() {
            return Err(SessionLogError::Schema {
                element: "session".into(),
                detail: format!("session {:?} has no interactions", session.id),
            });
        }
    }
    Ok(log)
}

/// Wall-clock length of a session in seconds: the latest timestamp among
/// interaction starts and click starts/ends. The terminal event carries no
/// dwell of its own.
pub fn session_duration(session: &Session) -> f64 {
    let mut latest = 0.0f64;
    for inter in &session.interactions {
        latest = latest.max(inter.starttime_s);
        for click in &inter.clicks {
            latest = latest.max(click.starttime_s);
            if let Some(end) = click.endtime_s {
                latest = latest.max(end);
            }
        }
    }
    latest
}

/// De-duplicated fetch counts for one session.
///
/// Queries de-duplicate by exact string, pages by docid. `serp_linked_pages`
/// is the union of result docids over the first occurrence of each distinct
/// query (a repeated query is served from local state, so only its first
/// SERP transfers anything).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniqueFetches {
    pub unique_queries: usize,
    pub unique_clicked_pages: usize,
    pub serp_linked_pages: BTreeSet<String>,
}

pub fn unique_fetches(session: &Session) -> UniqueFetches {
    let mut queries = BTreeSet::new();
    let mut clicked = BTreeSet::new();
    let mut linked = BTreeSet::new();
    for inter in &session.interactions {
        if queries.insert(inter.query.as_str()) {
            for r in &inter.results {
                linked.insert(r.docid.clone());
            }
        }
        for c in &inter.clicks {
            clicked.insert(c.docid.as_str());
        }
    }
    UniqueFetches {
        unique_queries: queries.len(),
        unique_clicked_pages: clicked.len(),
        serp_linked_pages: linked,
    }
}
