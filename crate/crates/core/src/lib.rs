//! Simulation and analysis of interactive search across a high-latency link.
//!
//! The library models a searcher on Mars talking to a search engine on Earth
//! over a speed-of-light link (8 to 48 minutes round trip) and asks how much
//! worse the experience gets, and how much of the damage each mitigation
//! strategy undoes. It has six parts:
//!
//! * [`simkernel`] — a small deterministic discrete-event kernel with two
//!   endpoints joined by a fixed-delay link.
//! * [`sessionlog`] — search session logs: an XML ingest dialect, a canonical
//!   JSON form, per-session statistics, and a seeded synthetic generator.
//! * [`retrieval`] — tokenization, an inverted index with BM25 ranking, a
//!   hashed-ngram quality classifier, and static cache selection.
//! * [`strategies`] — session replay under latency-mitigation policies
//!   (baseline, SERP prefetch, topical prefetch, suggestions, static cache).
//! * [`totalrecall`] — continuous active learning (high-recall review) run
//!   on Earth, on Mars, and split across the link.
//! * [`metrics`] — effort/data ratios, macro-averaged summaries, and
//!   plot-ready report emission.

pub mod metrics;
pub mod retrieval;
pub mod sessionlog;
pub mod simkernel;
pub mod strategies;
pub mod totalrecall;
