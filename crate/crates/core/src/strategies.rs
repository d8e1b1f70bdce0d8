//! Session replay under latency-remediation policies.
//!
//! Each replay walks a logged session as if the searcher sat on the far end
//! of a slow link and charges them for every blocking round trip:
//!
//! * [`replay_baseline`]: every unique query and every unique clicked page
//!   is a full round trip. No overlap credit: the searcher stops and waits.
//! * [`replay_serp_prefetch`]: the response to a query carries the SERP and
//!   every linked result page not yet transferred, so covered clicks are
//!   free; a click on a page no SERP ever shipped still blocks.
//! * [`replay_static_cache`]: runs atop SERP pre-fetching with a cache
//!   pre-placed on the searcher's side. Queries are fired off without
//!   blocking; the searcher browses locally and stalls only when clicking a
//!   page that is neither cached nor landed yet, and then only for the
//!   remainder of the transfer (overlap-aware).
//!
//! Topical pre-fetching and query-suggestion expansion do not change
//! session timing; they are measured by [`topical_prefetch_hits`] and
//! [`suggestion_matches`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::retrieval::Index;
use crate::sessionlog::{session_duration, unique_fetches, Session, SessionLog};
use crate::simkernel::LinkConfig;

/// Which remediation policy a replay applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Baseline,
    SerpPrefetch,
    TopicalPrefetch,
    SuggestionPrefetch,
    StaticCache,
}

/// A policy plus its parameters. `validate` enforces that each parameter is
/// present exactly when its policy needs it.
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Topical pre-fetch depth.
    pub k: Option<usize>,
    pub cache_fraction: Option<f64>,
    /// Handle (path or name) of the suggestion provider fixture.
    pub suggestion_source: Option<String>,
    /// Static caching always runs atop SERP pre-fetching.
    pub combine_serp_prefetch: bool,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> PolicyConfig {
        PolicyConfig {
            kind,
            k: None,
            cache_fraction: None,
            suggestion_source: None,
            combine_serp_prefetch: kind == PolicyKind::StaticCache,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k.is_some() != (self.kind == PolicyKind::TopicalPrefetch) {
            return Err("k is required for topical-prefetch and meaningless elsewhere".into());
        }
        if let Some(k) = self.k {
            if k == 0 {
                return Err("k must be at least 1".into());
            }
        }
        if self.cache_fraction.is_some() != (self.kind == PolicyKind::StaticCache) {
            return Err("cache-fraction is required for static-cache and meaningless elsewhere".into());
        }
        if let Some(f) = self.cache_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(format!("cache-fraction must lie in [0, 1], got {f}"));
            }
        }
        if self.suggestion_source.is_some() != (self.kind == PolicyKind::SuggestionPrefetch) {
            return Err(
                "suggestion-source is required for suggestion-prefetch and meaningless elsewhere"
                    .into(),
            );
        }
        if self.kind == PolicyKind::StaticCache && !self.combine_serp_prefetch {
            return Err("static-cache is defined atop SERP pre-fetching".into());
        }
        Ok(())
    }
}

/// Cache-hit statistics carried alongside a replay outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitStats {
    pub hits: u64,
    pub trials: u64,
}

/// What one session cost under a policy and link.
///
/// `mars_time_s = earth_time_s + wait_time_s` holds by construction;
/// `earth_time_s` is the logged session duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session_id: String,
    pub earth_time_s: f64,
    pub mars_time_s: f64,
    pub wait_time_s: f64,
    pub blocking_waits: u64,
    pub pages_transferred: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits: Option<HitStats>,
}

fn outcome(
    session: &Session,
    wait_time_s: f64,
    blocking_waits: u64,
    pages_transferred: u64,
    hits: Option<HitStats>,
) -> SessionOutcome {
    let earth_time_s = session_duration(session);
    SessionOutcome {
        session_id: session.id.clone(),
        earth_time_s,
        mars_time_s: earth_time_s + wait_time_s,
        wait_time_s,
        blocking_waits,
        pages_transferred,
        hits,
    }
}

/// Replays with no remediation: each unique query and each unique clicked
/// page is fetched exactly once, and each fetch blocks for the full round
/// trip. Pages transferred equals the number of fetches.
pub fn replay_baseline(session: &Session, link: &LinkConfig) -> SessionOutcome {
    let uf = unique_fetches(session);
    let waits = (uf.unique_queries + uf.unique_clicked_pages) as u64;
    outcome(session, waits as f64 * link.rtt_s(), waits, waits, None)
}

/// Replays with SERP pre-fetching: each unique query blocks for one round
/// trip, and its response carries the SERP plus every linked page not
/// already transferred this session. Clicks on transferred pages are free;
/// a click on a page nothing has shipped yet is a demand fetch costing one
/// more round trip and page.
pub fn replay_serp_prefetch(session: &Session, link: &LinkConfig) -> SessionOutcome {
    let mut transferred: BTreeSet<&str> = BTreeSet::new();
    let mut seen_queries: BTreeSet<&str> = BTreeSet::new();
    let mut waits: u64 = 0;
    let mut pages: u64 = 0;
    for inter in &session.interactions {
        if seen_queries.insert(&inter.query) {
            waits += 1;
            pages += 1; // the SERP itself
            for res in &inter.results {
                if transferred.insert(&res.docid) {
                    pages += 1;
                }
            }
        }
        for click in &inter.clicks {
            if transferred.insert(&click.docid) {
                waits += 1;
                pages += 1;
            }
        }
    }
    outcome(session, waits as f64 * link.rtt_s(), waits, pages, None)
}

/// Replays with SERP pre-fetching plus a static cache on the searcher's
/// side. Queries are sent without blocking at the moment the log reaches
/// them; each first-occurrence query's response lands one round trip later
/// carrying the SERP and the linked pages that are neither cached nor
/// already sent. The searcher follows the log's own pacing and stalls only
/// at a click on a page that is cached nowhere and has not landed yet:
/// in-flight pages cost the remaining transfer time, never-shipped pages
/// cost a full on-demand round trip. Cached pages are never transferred or
/// counted.
pub fn replay_static_cache(
    session: &Session,
    cache: &BTreeSet<String>,
    link: &LinkConfig,
) -> SessionOutcome {
    let rtt = link.rtt_s();
    // All stall time so far; log timestamps shift forward by this much.
    let mut shift = 0.0f64;
    let mut wait_time = 0.0f64;
    let mut waits: u64 = 0;
    let mut pages: u64 = 0;
    // docid -> absolute time its transfer lands on the searcher's side.
    let mut arrival: BTreeMap<&str, f64> = BTreeMap::new();
    let mut seen_queries: BTreeSet<&str> = BTreeSet::new();
    let mut clicked: BTreeSet<&str> = BTreeSet::new();
    let mut clicked_hits: u64 = 0;

    for inter in &session.interactions {
        let sent_at = inter.starttime_s + shift;
        if seen_queries.insert(&inter.query) {
            pages += 1; // the full SERP still ships
            let lands_at = sent_at + rtt;
            for res in &inter.results {
                let d = res.docid.as_str();
                if cache.contains(d) || arrival.contains_key(d) {
                    continue;
                }
                arrival.insert(d, lands_at);
                pages += 1;
            }
        }
        for click in &inter.clicks {
            let click_at = click.starttime_s + shift;
            let d = click.docid.as_str();
            if clicked.insert(d) && cache.contains(d) {
                clicked_hits += 1;
            }
            if cache.contains(d) {
                continue;
            }
            match arrival.get(d).copied() {
                Some(lands_at) if lands_at <= click_at => {}
                Some(lands_at) => {
                    let w = lands_at - click_at;
                    wait_time += w;
                    shift += w;
                    waits += 1;
                }
                None => {
                    // Data glitch: page in no SERP so far. Fetch on demand.
                    pages += 1;
                    arrival.insert(d, click_at + rtt);
                    if rtt > 0.0 {
                        wait_time += rtt;
                        shift += rtt;
                        waits += 1;
                    }
                }
            }
        }
    }
    let trials = clicked.len() as u64;
    outcome(session, wait_time, waits, pages, Some(HitStats { hits: clicked_hits, trials }))
}

/// Outcome of counting topical pre-fetch hits over a whole log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HitReport {
    pub hits: u64,
    pub candidates: u64,
    /// SERP docids missing from the index; they can never be pre-fetched
    /// and count as misses.
    pub unknown_docids: BTreeSet<String>,
}

impl HitReport {
    /// `None` when there are no candidates (e.g. only single-query sessions).
    pub fn ratio(&self) -> Option<f64> {
        if self.candidates == 0 {
            None
        } else {
            Some(self.hits as f64 / self.candidates as f64)
        }
    }
}

/// Counts how often pre-fetching the top-`k` ranked documents for each
/// query would have covered a document surfacing in a later SERP of the
/// same session. Candidates are the distinct docids in SERPs after the
/// session's first query, judged at their first appearance against the
/// pre-fetches of strictly earlier queries.
pub fn topical_prefetch_hits(log: &SessionLog, index: &Index, k: usize) -> HitReport {
    let mut report = HitReport::default();
    for session in &log.sessions {
        let mut prefetched: BTreeSet<String> = BTreeSet::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for (i, inter) in session.interactions.iter().enumerate() {
            if i > 0 {
                for res in &inter.results {
                    let d = res.docid.as_str();
                    if !seen.insert(d) {
                        continue;
                    }
                    report.candidates += 1;
                    if prefetched.contains(d) {
                        report.hits += 1;
                    }
                    if !index.contains(d) {
                        report.unknown_docids.insert(d.to_string());
                    }
                }
            }
            prefetched.extend(index.rank_all(&inter.query, k));
        }
    }
    report
}

/// Maps a query to an ordered list of suggested follow-up queries.
pub trait SuggestionProvider {
    fn suggest(&self, query: &str) -> &[String];
}

/// A suggestion fixture loaded from a JSON object of query -> suggestions.
/// Keys and lookups are whitespace-trimmed.
#[derive(Debug, Clone, Default)]
pub struct FileSuggestions {
    map: BTreeMap<String, Vec<String>>,
}

impl FileSuggestions {
    pub fn from_json_str(s: &str) -> Result<FileSuggestions, serde_json::Error> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(s)?;
        let mut f = FileSuggestions::default();
        for (q, sugg) in raw {
            f.insert(&q, sugg);
        }
        Ok(f)
    }

    pub fn insert(&mut self, query: &str, suggestions: Vec<String>) {
        self.map.insert(query.trim().to_string(), suggestions);
    }
}

impl SuggestionProvider for FileSuggestions {
    fn suggest(&self, query: &str) -> &[String] {
        self.map.get(query.trim()).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Outcome of matching suggestions against later queries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchReport {
    /// Later queries (counted per position) equal, after trimming, to some
    /// suggestion offered for an earlier query of the same session.
    pub matched_later_queries: u64,
    /// All non-first interactions, the match opportunities.
    pub total_later_queries: u64,
}

/// Counts later queries a suggestion service would have anticipated: for
/// each session, a non-first query matches if any suggestion for any
/// strictly earlier query equals it verbatim after trimming.
pub fn suggestion_matches(log: &SessionLog, provider: &dyn SuggestionProvider) -> MatchReport {
    let mut report = MatchReport::default();
    for session in &log.sessions {
        let queries: Vec<&str> = session.interactions.iter().map(|i| i.query.as_str()).collect();
        for j in 1..queries.len() {
            report.total_later_queries += 1;
            let target = queries[j].trim();
            let matched = queries[..j]
                .iter()
                .any(|q| provider.suggest(q).iter().any(|s| s.trim() == target));
            if matched {
                report.matched_later_queries += 1;
            }
        }
    }
    report
}
