//! Corpus handling, BM25 retrieval, quality scoring, and cache selection.
//!
//! Documents live in a JSONL interchange form (one document object per
//! line). An [`Index`] is an in-memory inverted index over tokenized text;
//! [`Index::bm25_search`] ranks documents for a query. A [`QualityModel`]
//! (see [`quality`]) scores documents by predicted usefulness, from which
//! [`select_cache`] picks the best fraction of a corpus for pre-placement on
//! the far side of a slow link, and [`cache_hit_ratios`] measures how often
//! a session log would have been served from that cache.

mod gen;
pub mod quality;

pub use gen::{generate_corpus, make_query_pool, CorpusGenConfig};
pub use quality::{train_quality, QualityModel, QualityTrainParams};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sessionlog::{unique_fetches, SessionLog};

/// BM25 saturation parameter default.
pub const BM25_K1: f64 = 0.9;
/// BM25 length-normalization parameter default.
pub const BM25_B: f64 = 0.4;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate docid {docid:?}")]
    DuplicateDocid { docid: String },
    #[error("jsonl parse error on line {line}: {msg}")]
    Jsonl { line: usize, msg: String },
    #[error("qrels parse error on line {line}: {msg}")]
    Qrels { line: usize, msg: String },
    #[error("quality training needs examples of both classes; the {class} set is empty")]
    EmptyClass { class: &'static str },
}

/// Editorial label attached to a document, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Relevant,
    Nonrelevant,
    Spam,
}

/// A document in the corpus.
///
/// `word_count()` (whitespace tokens) drives reading-time estimates and is
/// derived from `text`, so it cannot drift out of sync. `label` plus `topic`
/// record editorial judgments where available; `quality` is an optional
/// precomputed usefulness score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub docid: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

impl Document {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// A topic: an identifier plus a short description of the information need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDescriptor {
    pub topic: String,
    pub description: String,
}

/// Documents plus the topics they were generated or judged against.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub topics: Vec<TopicDescriptor>,
}

impl Corpus {
    pub fn topic(&self, id: &str) -> Option<&TopicDescriptor> {
        self.topics.iter().find(|t| t.topic == id)
    }
}

/// Relevance judgments: topic id to the set of relevant docids.
pub type Qrels = BTreeMap<String, BTreeSet<String>>;

/// Lowercases and splits on non-alphanumeric characters. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// Inverted index over a document set, with BM25 scoring.
///
/// Internal document numbers follow docid order, so posting lists are sorted
/// by docid and score ties resolve to the lexicographically smaller docid.
#[derive(Debug)]
pub struct Index {
    docids: Vec<String>,
    doc_len: Vec<u32>,
    avgdl: f64,
    postings: HashMap<String, Vec<Posting>>,
    k1: f64,
    b: f64,
}

/// One ranked search result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub docid: String,
    pub score: f64,
}

impl Index {
    /// Builds an index with default BM25 parameters. Docids must be unique.
    pub fn build(docs: &[Document]) -> Result<Index, RetrievalError> {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| docs[a].docid.cmp(&docs[b].docid));
        for w in order.windows(2) {
            if docs[w[0]].docid == docs[w[1]].docid {
                return Err(RetrievalError::DuplicateDocid { docid: docs[w[0]].docid.clone() });
            }
        }
        let mut docids = Vec::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        for (internal, &orig) in order.iter().enumerate() {
            let doc = &docs[orig];
            docids.push(doc.docid.clone());
            let tokens = tokenize(&doc.text);
            doc_len.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { doc: internal as u32, tf: count });
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avgdl = if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 };
        Ok(Index { docids, doc_len, avgdl, postings, k1: BM25_K1, b: BM25_B })
    }

    pub fn with_bm25_params(mut self, k1: f64, b: f64) -> Index {
        self.k1 = k1;
        self.b = b;
        self
    }

    pub fn n_docs(&self) -> usize {
        self.docids.len()
    }

    pub fn contains(&self, docid: &str) -> bool {
        self.docids.binary_search_by(|d| d.as_str().cmp(docid)).is_ok()
    }

    /// Inverse document frequency, floored at zero by construction:
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    fn idf(&self, df: usize) -> f64 {
        let n = self.n_docs() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`k` documents for `query` by BM25, descending score, ties broken
    /// by ascending docid. Only documents containing at least one query term
    /// are candidates; duplicate query terms count once.
    pub fn bm25_search(&self, query: &str, k: usize) -> Vec<SearchHit> {
        if k == 0 {
            return Vec::new();
        }
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(plist) = self.postings.get(term) else { continue };
            let idf = self.idf(plist.len());
            for p in plist {
                let dl = self.doc_len[p.doc as usize] as f64;
                let norm = if self.avgdl > 0.0 { 1.0 - self.b + self.b * dl / self.avgdl } else { 1.0 };
                let tf = p.tf as f64;
                let contrib = idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
                *scores.entry(p.doc).or_insert(0.0) += contrib;
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        // Internal number order is docid order, so it is the tiebreak.
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(k)
            .map(|(doc, score)| SearchHit { docid: self.docids[doc as usize].clone(), score })
            .collect()
    }

    /// Top-`k` docids over the whole corpus: BM25 matches first, then
    /// zero-score documents in ascending docid order. Unlike
    /// [`Index::bm25_search`], this always returns `min(k, n_docs)` entries,
    /// which models a prefetcher that ships a fixed-size batch.
    pub fn rank_all(&self, query: &str, k: usize) -> Vec<String> {
        let mut out: Vec<String> =
            self.bm25_search(query, k).into_iter().map(|h| h.docid).collect();
        if out.len() < k.min(self.n_docs()) {
            let matched: BTreeSet<&str> = out.iter().map(|d| d.as_str()).collect();
            let fill: Vec<String> = self
                .docids
                .iter()
                .filter(|d| !matched.contains(d.as_str()))
                .take(k - out.len())
                .cloned()
                .collect();
            out.extend(fill);
        }
        out
    }
}

/// Scores every document once with a quality model; reusable across cache
/// fractions so the model runs once per corpus.
pub struct QualityScores {
    /// (docid, score) sorted by descending score, ties by ascending docid.
    ranked: Vec<(String, f64)>,
}

impl QualityScores {
    pub fn compute(model: &QualityModel, docs: &[Document]) -> QualityScores {
        let mut ranked: Vec<(String, f64)> =
            docs.iter().map(|d| (d.docid.clone(), model.score_text(&d.text))).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        QualityScores { ranked }
    }

    /// The top `floor(fraction * n_docs)` docids.
    pub fn select(&self, fraction: f64) -> BTreeSet<String> {
        assert!(
            (0.0..=1.0).contains(&fraction),
            "cache fraction must be in [0, 1], got {fraction}"
        );
        let take = (fraction * self.ranked.len() as f64).floor() as usize;
        self.ranked.iter().take(take).map(|(d, _)| d.clone()).collect()
    }
}

/// Picks the best `fraction` of `docs` by quality score as the static cache.
pub fn select_cache(model: &QualityModel, docs: &[Document], fraction: f64) -> BTreeSet<String> {
    QualityScores::compute(model, docs).select(fraction)
}

/// Cache hit ratios over a session log.
///
/// Counting is per-session distinct: a page clicked five times in one
/// session is one trial; the same page clicked in another session is
/// another. Ratios are `None` when a log has no trials of that kind.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRatios {
    pub clicked_hits: u64,
    pub clicked_trials: u64,
    pub serp_hits: u64,
    pub serp_trials: u64,
}

impl HitRatios {
    pub fn clicked_ratio(&self) -> Option<f64> {
        ratio(self.clicked_hits, self.clicked_trials)
    }
    pub fn serp_ratio(&self) -> Option<f64> {
        ratio(self.serp_hits, self.serp_trials)
    }
}

fn ratio(hits: u64, trials: u64) -> Option<f64> {
    if trials == 0 {
        None
    } else {
        Some(hits as f64 / trials as f64)
    }
}

/// Measures how much of a log's clicked and SERP-linked pages a static cache
/// would have served locally.
pub fn cache_hit_ratios(log: &SessionLog, cache: &BTreeSet<String>) -> HitRatios {
    let mut r = HitRatios { clicked_hits: 0, clicked_trials: 0, serp_hits: 0, serp_trials: 0 };
    for session in &log.sessions {
        let uf = unique_fetches(session);
        let mut clicked: BTreeSet<&str> = BTreeSet::new();
        for inter in &session.interactions {
            for c in &inter.clicks {
                clicked.insert(&c.docid);
            }
        }
        r.clicked_trials += clicked.len() as u64;
        r.clicked_hits += clicked.iter().filter(|d| cache.contains(**d)).count() as u64;
        r.serp_trials += uf.serp_linked_pages.len() as u64;
        r.serp_hits += uf.serp_linked_pages.iter().filter(|d| cache.contains(d.as_str())).count() as u64;
    }
    r
}

/// Reads documents from JSONL: one JSON document object per non-blank line.
pub fn read_corpus_jsonl(s: &str) -> Result<Vec<Document>, RetrievalError> {
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| RetrievalError::Jsonl { line: i + 1, msg: e.to_string() })?;
        if !seen.insert(doc.docid.clone()) {
            return Err(RetrievalError::DuplicateDocid { docid: doc.docid });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    out
}

pub fn read_topics_jsonl(s: &str) -> Result<Vec<TopicDescriptor>, RetrievalError> {
    let mut topics = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: TopicDescriptor = serde_json::from_str(line)
            .map_err(|e| RetrievalError::Jsonl { line: i + 1, msg: e.to_string() })?;
        topics.push(t);
    }
    Ok(topics)
}

pub fn write_topics_jsonl(topics: &[TopicDescriptor]) -> String {
    let mut out = String::new();
    for t in topics {
        out.push_str(&serde_json::to_string(t).expect("topic serializes"));
        out.push('\n');
    }
    out
}

/// Reads TREC-style qrels: `topic <ignored> docid relevance` per line, where
/// positive relevance marks the document relevant.
pub fn read_qrels(s: &str) -> Result<Qrels, RetrievalError> {
    let mut qrels = Qrels::new();
    for (i, line) in s.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(RetrievalError::Qrels {
                line: i + 1,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let rel: i32 = fields[3].parse().map_err(|_| RetrievalError::Qrels {
            line: i + 1,
            msg: format!("relevance {:?} is not an integer", fields[3]),
        })?;
        qrels.entry(fields[0].to_string()).or_default();
        if rel > 0 {
            qrels.get_mut(fields[0]).unwrap().insert(fields[2].to_string());
        }
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (topic, docs) in qrels {
        for d in docs {
            out.push_str(&format!("{topic} 0 {d} 1\n"));
        }
    }
    out
}

/// Derives qrels from document labels: a document labeled relevant for a
/// topic is that topic's relevant document.
pub fn derived_qrels(corpus: &Corpus) -> Qrels {
    let mut qrels = Qrels::new();
    for t in &corpus.topics {
        qrels.entry(t.topic.clone()).or_default();
    }
    for d in &corpus.docs {
        if let (Some(LabelKind::Relevant), Some(topic)) = (d.label, d.topic.as_ref()) {
            qrels.entry(topic.clone()).or_default().insert(d.docid.clone());
        }
    }
    qrels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document { docid: id.into(), text: text.into(), topic: None, label: None, quality: None }
    }

    #[test]
    fn tokenize_lowercases_and_splits_on_non_alphanumerics() {
        assert_eq!(tokenize("Mars, DUST-storms! (2024)"), vec!["mars", "dust", "storms", "2024"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("Łódź café"), vec!["łódź", "café"]);
    }

    #[test]
    fn word_count_is_whitespace_tokens() {
        assert_eq!(doc("d", "three word text").word_count(), 3);
        assert_eq!(doc("d", "").word_count(), 0);
    }

    #[test]
    fn duplicate_docids_rejected() {
        let err = Index::build(&[doc("a", "x"), doc("a", "y")]).unwrap_err();
        assert!(matches!(err, RetrievalError::DuplicateDocid { .. }));
    }

    #[test]
    fn empty_query_returns_nothing() {
        let idx = Index::build(&[doc("a", "some text")]).unwrap();
        assert!(idx.bm25_search("", 10).is_empty());
        assert!(idx.bm25_search("???", 10).is_empty());
        assert!(idx.bm25_search("some", 0).is_empty());
    }

    #[test]
    fn matching_docs_rank_above_partial_matches() {
        let idx = Index::build(&[
            doc("a", "dust storm on mars"),
            doc("b", "dust in the wind"),
            doc("c", "storm warning"),
            doc("d", "unrelated text entirely"),
        ])
        .unwrap();
        let hits = idx.bm25_search("dust storm", 10);
        assert_eq!(hits[0].docid, "a");
        assert_eq!(hits.len(), 3);
        assert!(hits.iter().all(|h| h.score > 0.0));
        assert!(!hits.iter().any(|h| h.docid == "d"));
    }

    #[test]
    fn ties_break_by_ascending_docid() {
        let idx = Index::build(&[doc("b", "same words"), doc("a", "same words")]).unwrap();
        let hits = idx.bm25_search("same", 10);
        assert_eq!(hits[0].docid, "a");
        assert_eq!(hits[1].docid, "b");
        assert_eq!(hits[0].score, hits[1].score);
    }

    /// Brute-force BM25 over every document, mirroring the scoring formula
    /// but none of the indexing machinery.
    fn exhaustive_bm25(docs: &[Document], query: &str, k: usize, k1: f64, b: f64) -> Vec<SearchHit> {
        let n = docs.len() as f64;
        let lens: Vec<f64> = docs.iter().map(|d| tokenize(&d.text).len() as f64).collect();
        let avgdl = lens.iter().sum::<f64>() / n;
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let mut hits = Vec::new();
        for (i, d) in docs.iter().enumerate() {
            let tokens = tokenize(&d.text);
            let mut score = 0.0;
            for t in &terms {
                let tf = tokens.iter().filter(|x| *x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d2| tokenize(&d2.text).contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * lens[i] / avgdl));
            }
            if score > 0.0 {
                hits.push(SearchHit { docid: d.docid.clone(), score });
            }
        }
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.docid.cmp(&b.docid)));
        hits.truncate(k);
        hits
    }

    #[test]
    fn bm25_matches_exhaustive_oracle() {
        // Deterministic little corpus with repeated and shared vocabulary.
        let vocab = ["dust", "storm", "mars", "rover", "crater", "ice", "polar", "wind"];
        let mut docs = Vec::new();
        let mut state = 123456789u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        for i in 0..100 {
            let len = 3 + next() % 12;
            let words: Vec<&str> = (0..len).map(|_| vocab[next() % vocab.len()]).collect();
            docs.push(doc(&format!("d{i:03}"), &words.join(" ")));
        }
        for query in ["dust storm", "polar ice rover", "mars", "wind wind crater"] {
            for k in [1, 5, 20] {
                let idx = Index::build(&docs).unwrap();
                let got = idx.bm25_search(query, k);
                let want = exhaustive_bm25(&docs, query, k, BM25_K1, BM25_B);
                assert_eq!(got.len(), want.len(), "query {query:?} k {k}");
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.docid, w.docid, "query {query:?} k {k}");
                    assert!((g.score - w.score).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn qrels_roundtrip() {
        let mut qrels = Qrels::new();
        qrels.entry("t1".into()).or_default().insert("d2".into());
        qrels.entry("t1".into()).or_default().insert("d1".into());
        qrels.entry("t2".into()).or_default();
        let text = write_qrels(&qrels);
        let back = read_qrels(&text).unwrap();
        assert_eq!(back.get("t1").unwrap().len(), 2);
        // Zero-relevance lines register the topic without marking docs.
        let more = read_qrels("t3 0 dX 0\n").unwrap();
        assert!(more.get("t3").unwrap().is_empty());
    }

    #[test]
    fn corpus_jsonl_roundtrip_ignores_blank_lines() {
        let docs = vec![
            Document {
                docid: "a".into(),
                text: "hello world".into(),
                topic: Some("t1".into()),
                label: Some(LabelKind::Relevant),
                quality: Some(0.9),
            },
            doc("b", "plain"),
        ];
        let text = write_corpus_jsonl(&docs);
        let with_blanks = format!("\n{text}\n");
        assert_eq!(read_corpus_jsonl(&with_blanks).unwrap(), docs);
    }

    #[test]
    fn jsonl_duplicate_docid_rejected() {
        let text = "{\"docid\":\"a\",\"text\":\"x\"}\n{\"docid\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            read_corpus_jsonl(text).unwrap_err(),
            RetrievalError::DuplicateDocid { .. }
        ));
    }
}
