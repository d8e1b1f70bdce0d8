//! Seeded synthetic session-log generation.
//!
//! Each session picks a topic, issues queries drawn from that topic's query
//! pool, and clicks results of the BM25 ranking for each query. Query and
//! click counts follow Poisson draws whose means are configurable; click
//! targets are weighted toward early ranks and high-quality documents, so
//! logs exercise the same skew a real clickthrough log would.

use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::{Click, Interaction, InteractionKind, ResultEntry, Session, SessionLog, SessionLogError};
use crate::retrieval::{Corpus, Index};

/// Queries known to express one topic's information need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicQueries {
    pub topic: String,
    pub queries: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LogSynthConfig {
    pub n_sessions: usize,
    /// Mean queries per session; realized as 1 + Poisson(mean - 1).
    pub mean_queries_per_session: f64,
    /// Mean clicks per session, spread over its interactions.
    pub mean_clicks_per_session: f64,
    /// Results kept per SERP.
    pub serp_size: usize,
    /// Mean idle gap between interactions, seconds.
    pub mean_think_time_s: f64,
    /// Chance a follow-up interaction reissues an earlier query verbatim.
    pub repeat_query_prob: f64,
    /// Strength of the preference for clicking high-quality documents;
    /// click weight is (1/rank) * exp(bias * quality).
    pub click_quality_bias: f64,
    pub seed: u64,
}

impl Default for LogSynthConfig {
    fn default() -> LogSynthConfig {
        LogSynthConfig {
            n_sessions: 1000,
            mean_queries_per_session: 3.72,
            mean_clicks_per_session: 1.34,
            serp_size: 10,
            mean_think_time_s: 30.0,
            repeat_query_prob: 0.08,
            click_quality_bias: 4.0,
            seed: 13,
        }
    }
}

/// A Poisson draw that tolerates a zero (or negative) mean.
fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// An exponential gap with a floor, so events never coincide.
fn gap(rng: &mut ChaCha8Rng, floor: f64, mean: f64) -> f64 {
    floor + Exp::new(1.0 / mean).expect("positive rate").sample(rng)
}

/// Generates a deterministic synthetic log. Clicked documents always
/// appear in the clicking interaction's result list.
pub fn synthesize_log(
    corpus: &Corpus,
    index: &Index,
    pool: &[TopicQueries],
    config: &LogSynthConfig,
) -> Result<SessionLog, SessionLogError> {
    if corpus.docs.is_empty() || index.n_docs() == 0 {
        return Err(SessionLogError::EmptyCorpus);
    }
    let usable: Vec<&TopicQueries> = pool.iter().filter(|tq| !tq.queries.is_empty()).collect();
    if usable.is_empty() {
        return Err(SessionLogError::EmptyQueryPool);
    }
    let quality: BTreeMap<&str, f64> = corpus
        .docs
        .iter()
        .map(|d| (d.docid.as_str(), d.quality.unwrap_or(0.5)))
        .collect();

    let click_mean_per_query = if config.mean_queries_per_session > 0.0 {
        config.mean_clicks_per_session / config.mean_queries_per_session
    } else {
        0.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sessions = Vec::with_capacity(config.n_sessions);
    for s in 0..config.n_sessions {
        let topic = usable[rng.gen_range(0..usable.len())];
        let n_queries = 1 + poisson(&mut rng, config.mean_queries_per_session - 1.0);
        let mut interactions: Vec<Interaction> = Vec::with_capacity(n_queries);
        let mut clock = 0.0;
        for i in 0..n_queries {
            let query = if i > 0 && rng.gen_bool(config.repeat_query_prob) {
                interactions[rng.gen_range(0..interactions.len())].query.clone()
            } else {
                topic.queries[rng.gen_range(0..topic.queries.len())].clone()
            };
            let hits = index.bm25_search(&query, config.serp_size);
            let results: Vec<ResultEntry> = hits
                .iter()
                .enumerate()
                .map(|(r, h)| ResultEntry {
                    rank: (r + 1) as u32,
                    docid: h.docid.clone(),
                    url: None,
                    title: None,
                    snippet: None,
                })
                .collect();
            let starttime_s = clock;
            clock += gap(&mut rng, 2.0, 8.0); // scanning the SERP
            let clicks = draw_clicks(
                &mut rng,
                &results,
                &quality,
                click_mean_per_query,
                config.click_quality_bias,
                &mut clock,
            );
            interactions.push(Interaction {
                num: (i + 1) as u32,
                starttime_s,
                kind: if i == 0 { InteractionKind::Initial } else { InteractionKind::Reformulate },
                query,
                results,
                clicks,
            });
            clock += gap(&mut rng, 2.0, config.mean_think_time_s);
        }
        sessions.push(Session { id: format!("s{:05}", s + 1), interactions });
    }
    let mut log = SessionLog::new(sessions);
    log.source = Some("synthetic".to_string());
    Ok(log)
}

/// Weighted sampling of distinct result ranks, advancing the clock past
/// each click's dwell.
fn draw_clicks(
    rng: &mut ChaCha8Rng,
    results: &[ResultEntry],
    quality: &BTreeMap<&str, f64>,
    mean_clicks: f64,
    quality_bias: f64,
    clock: &mut f64,
) -> Vec<Click> {
    let n_clicks = poisson(rng, mean_clicks).min(results.len());
    let mut remaining: Vec<(&ResultEntry, f64)> = results
        .iter()
        .map(|r| {
            let q = quality.get(r.docid.as_str()).copied().unwrap_or(0.5);
            (r, (quality_bias * q).exp() / r.rank as f64)
        })
        .collect();
    let mut clicks = Vec::with_capacity(n_clicks);
    for _ in 0..n_clicks {
        let dist = WeightedIndex::new(remaining.iter().map(|(_, w)| *w)).expect("positive weights");
        let chosen = dist.sample(rng);
        let (result, _) = remaining.remove(chosen);
        let starttime_s = *clock;
        let dwell = gap(rng, 3.0, 20.0);
        clicks.push(Click {
            docid: result.docid.clone(),
            starttime_s,
            endtime_s: Some(starttime_s + dwell),
        });
        *clock = starttime_s + dwell + gap(rng, 1.0, 4.0);
    }
    clicks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{generate_corpus, make_query_pool, CorpusGenConfig};
    use crate::sessionlog::to_canonical_json;

    fn fixture() -> (Corpus, Index, Vec<TopicQueries>) {
        let corpus = generate_corpus(&CorpusGenConfig {
            n_docs: 300,
            n_topics: 3,
            words_per_doc: 60,
            ..Default::default()
        });
        let index = Index::build(&corpus.docs).unwrap();
        let pool = make_query_pool(&corpus, 20, 11);
        (corpus, index, pool)
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let (corpus, index, pool) = fixture();
        let cfg = LogSynthConfig { n_sessions: 1, ..Default::default() };
        match synthesize_log(&corpus, &index, &[], &cfg) {
            Err(SessionLogError::EmptyQueryPool) => {}
            other => panic!("expected EmptyQueryPool, got {other:?}"),
        }
        let hollow = vec![TopicQueries { topic: "t".into(), queries: vec![] }];
        assert!(matches!(
            synthesize_log(&corpus, &index, &hollow, &cfg),
            Err(SessionLogError::EmptyQueryPool)
        ));
        let empty = Corpus::default();
        let empty_index = Index::build(&[]).unwrap();
        assert!(matches!(
            synthesize_log(&empty, &empty_index, &pool, &cfg),
            Err(SessionLogError::EmptyCorpus)
        ));
    }

    #[test]
    fn zero_sessions_gives_empty_log() {
        let (corpus, index, pool) = fixture();
        let cfg = LogSynthConfig { n_sessions: 0, ..Default::default() };
        let log = synthesize_log(&corpus, &index, &pool, &cfg).unwrap();
        assert!(log.sessions.is_empty());
    }

    #[test]
    fn same_seed_reproduces_the_log_exactly() {
        let (corpus, index, pool) = fixture();
        let cfg = LogSynthConfig { n_sessions: 50, ..Default::default() };
        let a = synthesize_log(&corpus, &index, &pool, &cfg).unwrap();
        let b = synthesize_log(&corpus, &index, &pool, &cfg).unwrap();
        assert_eq!(to_canonical_json(&a), to_canonical_json(&b));
        let c = synthesize_log(
            &corpus,
            &index,
            &pool,
            &LogSynthConfig { seed: 14, ..cfg },
        )
        .unwrap();
        assert_ne!(to_canonical_json(&a), to_canonical_json(&c));
    }

    #[test]
    fn clicks_come_from_their_interactions_results() {
        let (corpus, index, pool) = fixture();
        let cfg = LogSynthConfig { n_sessions: 200, ..Default::default() };
        let log = synthesize_log(&corpus, &index, &pool, &cfg).unwrap();
        for session in &log.sessions {
            assert!(!session.interactions.is_empty());
            let mut prev_start = f64::NEG_INFINITY;
            for (i, inter) in session.interactions.iter().enumerate() {
                assert_eq!(inter.num as usize, i + 1);
                assert!(inter.starttime_s > prev_start);
                prev_start = inter.starttime_s;
                let kind = if i == 0 { InteractionKind::Initial } else { InteractionKind::Reformulate };
                assert_eq!(inter.kind, kind);
                for c in &inter.clicks {
                    assert!(inter.results.iter().any(|r| r.docid == c.docid));
                    assert!(c.starttime_s > inter.starttime_s);
                    assert!(c.endtime_s.unwrap() > c.starttime_s);
                }
            }
        }
    }

    #[test]
    fn sample_means_track_configuration() {
        let (corpus, index, pool) = fixture();
        let cfg = LogSynthConfig { n_sessions: 2000, ..Default::default() };
        let log = synthesize_log(&corpus, &index, &pool, &cfg).unwrap();
        let n = log.sessions.len() as f64;
        let queries: usize = log.sessions.iter().map(|s| s.interactions.len()).sum();
        let clicks: usize = log
            .sessions
            .iter()
            .flat_map(|s| &s.interactions)
            .map(|i| i.clicks.len())
            .sum();
        let mean_q = queries as f64 / n;
        let mean_c = clicks as f64 / n;
        assert!(
            (mean_q - 3.72).abs() / 3.72 < 0.05,
            "query mean {mean_q} drifted more than 5% from 3.72"
        );
        assert!(
            (mean_c - 1.34).abs() / 1.34 < 0.05,
            "click mean {mean_c} drifted more than 5% from 1.34"
        );
    }
}
