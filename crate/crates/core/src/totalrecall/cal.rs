//! Continuous active learning: the reading-time model, the growing batch
//! schedule, and the retrain-and-rank cycle every review scenario shares.
//!
//! One [`CalState`] is one reviewer-facing learner: a labeled set over a
//! view of the corpus, a seed example standing in for the topic statement,
//! and a linear classifier refreshed from the labels plus a fresh random
//! sample of presumed-nonrelevant documents on every step.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::retrieval::quality::{
    hashed_features, train_from_features, QualityModel, QualityTrainParams,
};
use crate::retrieval::{Corpus, Document};

/// Seconds a reviewer needs to read and judge an `l`-word document.
pub fn reading_time_s(words: usize) -> f64 {
    0.018 * words as f64 + 7.8
}

/// The shortest possible judgment (a zero-word document); converts link
/// delay into a how-many-docs-of-runway watermark.
pub const MIN_READING_TIME_S: f64 = 7.8;

/// Batch growth rule: B grows by ceil(B/10) after every batch.
pub fn next_batch_size(b: usize) -> usize {
    b + b.div_ceil(10)
}

/// The first `n` batch sizes: 1, 2, 3, ... 10, 11, 13, 15, ...
pub fn batch_schedule(n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut b = 1;
    for _ in 0..n {
        out.push(b);
        b = next_batch_size(b);
    }
    out
}

/// Per-document features and reading costs, computed once per corpus and
/// shared read-only by every learner in a run.
#[derive(Debug)]
pub struct PreparedCorpus {
    docids: Vec<String>,
    features: Vec<Vec<u32>>,
    words: Vec<usize>,
    index_of: BTreeMap<String, usize>,
    hash_bits: u32,
}

impl PreparedCorpus {
    pub fn new(docs: &[Document], hash_bits: u32) -> PreparedCorpus {
        let mut p = PreparedCorpus {
            docids: Vec::with_capacity(docs.len()),
            features: Vec::with_capacity(docs.len()),
            words: Vec::with_capacity(docs.len()),
            index_of: BTreeMap::new(),
            hash_bits,
        };
        for (i, d) in docs.iter().enumerate() {
            let prev = p.index_of.insert(d.docid.clone(), i);
            assert!(prev.is_none(), "duplicate docid {:?}", d.docid);
            p.docids.push(d.docid.clone());
            p.features.push(hashed_features(&d.text, hash_bits));
            p.words.push(d.word_count());
        }
        p
    }

    pub fn from_corpus(corpus: &Corpus) -> PreparedCorpus {
        PreparedCorpus::new(&corpus.docs, QualityTrainParams::default().hash_bits)
    }

    pub fn len(&self) -> usize {
        self.docids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docids.is_empty()
    }

    pub fn docid(&self, doc: usize) -> &str {
        &self.docids[doc]
    }

    pub fn features(&self, doc: usize) -> &[u32] {
        &self.features[doc]
    }

    pub fn words(&self, doc: usize) -> usize {
        self.words[doc]
    }

    pub fn reading_time(&self, doc: usize) -> f64 {
        reading_time_s(self.words[doc])
    }

    pub fn index_of(&self, docid: &str) -> Option<usize> {
        self.index_of.get(docid).copied()
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }
}

/// Classifier-refresh hyperparameters for a learner.
#[derive(Debug, Clone)]
pub struct CalParams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Unlabeled documents sampled as presumed-nonrelevant per refresh.
    pub presumed_negatives: usize,
}

impl Default for CalParams {
    fn default() -> CalParams {
        CalParams { learning_rate: 0.01, epochs: 10, presumed_negatives: 100 }
    }
}

/// One continuous-active-learning instance.
#[derive(Debug)]
pub struct CalState {
    view: BTreeSet<usize>,
    labeled: BTreeMap<usize, bool>,
    seed_feats: Vec<u32>,
    batch_size: usize,
    model: Option<QualityModel>,
    stale: bool,
    rng: ChaCha8Rng,
    params: CalParams,
}

impl CalState {
    /// `seed_text` is the topic statement, treated as a standing relevant
    /// example in every refresh.
    pub fn new(seed_text: &str, hash_bits: u32, params: CalParams, rng_seed: u64) -> CalState {
        CalState {
            view: BTreeSet::new(),
            labeled: BTreeMap::new(),
            seed_feats: hashed_features(seed_text, hash_bits),
            batch_size: 1,
            model: None,
            stale: true,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            params,
        }
    }

    /// Makes a document visible to this learner. Idempotent.
    pub fn add_view(&mut self, doc: usize) {
        if self.view.insert(doc) {
            self.stale = true;
        }
    }

    pub fn extend_view(&mut self, docs: impl IntoIterator<Item = usize>) {
        for d in docs {
            self.add_view(d);
        }
    }

    pub fn in_view(&self, doc: usize) -> bool {
        self.view.contains(&doc)
    }

    pub fn view_len(&self) -> usize {
        self.view.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn advance_batch(&mut self) {
        self.batch_size = next_batch_size(self.batch_size);
    }

    pub fn label(&mut self, doc: usize, relevant: bool) {
        self.labeled.insert(doc, relevant);
        self.stale = true;
    }

    pub fn is_labeled(&self, doc: usize) -> bool {
        self.labeled.contains_key(&doc)
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.len()
    }

    /// Unlabeled documents in the view, ascending doc number.
    fn pool(&self) -> Vec<usize> {
        self.view.iter().copied().filter(|d| !self.labeled.contains_key(d)).collect()
    }

    pub fn pool_is_empty(&self) -> bool {
        self.view.iter().all(|d| self.labeled.contains_key(d))
    }

    /// Refreshes the classifier on the seed example, every label, and a
    /// fresh random sample of presumed-nonrelevant pool documents.
    pub fn retrain(&mut self, prepared: &PreparedCorpus) {
        let pool = self.pool();
        let n_sample = self.params.presumed_negatives.min(pool.len());
        let sampled = rand::seq::index::sample(&mut self.rng, pool.len(), n_sample);
        let mut examples: Vec<(&[u32], bool)> = Vec::with_capacity(1 + self.labeled.len() + n_sample);
        examples.push((&self.seed_feats, true));
        for (&doc, &rel) in &self.labeled {
            examples.push((prepared.features(doc), rel));
        }
        for i in sampled {
            examples.push((prepared.features(pool[i]), false));
        }
        let tp = QualityTrainParams {
            learning_rate: self.params.learning_rate,
            hash_bits: prepared.hash_bits(),
            epochs: self.params.epochs,
            seed: self.rng.gen(),
        };
        self.model = Some(train_from_features(&examples, &tp));
        self.stale = false;
    }

    pub fn retrain_if_stale(&mut self, prepared: &PreparedCorpus) {
        if self.stale || self.model.is_none() {
            self.retrain(prepared);
        }
    }

    /// Top `n` unlabeled view documents by classifier score, descending,
    /// ties by ascending docid; `exclude` members are skipped. Requires a
    /// trained model.
    pub fn rank(&self, prepared: &PreparedCorpus, exclude: &BTreeSet<usize>, n: usize) -> Vec<usize> {
        let model = self.model.as_ref().expect("rank() before any retrain()");
        let mut scored: Vec<(f64, usize)> = self
            .view
            .iter()
            .copied()
            .filter(|d| !self.labeled.contains_key(d) && !exclude.contains(d))
            .map(|d| (model.score_features(prepared.features(d)), d))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then_with(|| prepared.docid(a.1).cmp(prepared.docid(b.1)))
        });
        scored.into_iter().take(n).map(|(_, d)| d).collect()
    }

    /// One protocol step: refresh the classifier, select the top batch of
    /// unlabeled documents (the whole pool when it is smaller), and grow
    /// the batch size. An empty return means the pool is exhausted.
    pub fn cal_step(&mut self, prepared: &PreparedCorpus) -> Vec<usize> {
        self.retrain(prepared);
        let batch = self.rank(prepared, &BTreeSet::new(), self.batch_size);
        if !batch.is_empty() {
            self.advance_batch();
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reading_time_matches_the_model() {
        assert_eq!(reading_time_s(100), 9.6);
        assert_eq!(reading_time_s(0), 7.8);
        assert_eq!(reading_time_s(1000), 25.8);
    }

    #[test]
    fn batch_sizes_grow_by_a_tenth_rounded_up() {
        assert_eq!(
            batch_schedule(13),
            vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15]
        );
        assert_eq!(next_batch_size(100), 110);
        assert_eq!(next_batch_size(101), 112);
    }

    fn doc(id: &str, text: &str) -> Document {
        Document { docid: id.into(), text: text.into(), topic: None, label: None, quality: None }
    }

    fn marker_corpus() -> Vec<Document> {
        let mut docs = Vec::new();
        for i in 0..20 {
            docs.push(doc(&format!("n{i:02}"), "routine background filler words here"));
        }
        for i in 0..5 {
            docs.push(doc(&format!("r{i:02}"), "zylkovian treborax filament research notes"));
        }
        docs
    }

    #[test]
    fn prepared_corpus_lookups() {
        let docs = marker_corpus();
        let p = PreparedCorpus::new(&docs, 20);
        assert_eq!(p.len(), 25);
        assert_eq!(p.docid(0), "n00");
        assert_eq!(p.index_of("r04"), Some(24));
        assert_eq!(p.index_of("absent"), None);
        assert_eq!(p.words(0), 5);
        assert_eq!(p.reading_time(0), reading_time_s(5));
    }

    #[test]
    #[should_panic(expected = "duplicate docid")]
    fn prepared_corpus_rejects_duplicates() {
        PreparedCorpus::new(&[doc("a", "x"), doc("a", "y")], 20);
    }

    #[test]
    fn seed_alone_ranks_lookalikes_first() {
        let docs = marker_corpus();
        let p = PreparedCorpus::new(&docs, 20);
        let mut cal = CalState::new(
            "zylkovian treborax filament studies",
            20,
            CalParams::default(),
            7,
        );
        cal.extend_view(0..p.len());
        cal.retrain(&p);
        let top = cal.rank(&p, &BTreeSet::new(), 5);
        for d in top {
            assert!(p.docid(d).starts_with('r'), "expected marker doc, got {}", p.docid(d));
        }
    }

    #[test]
    fn cal_step_follows_the_batch_protocol() {
        let docs = marker_corpus();
        let p = PreparedCorpus::new(&docs, 20);
        let mut cal = CalState::new("zylkovian treborax", 20, CalParams::default(), 7);
        cal.extend_view(0..p.len());
        let first = cal.cal_step(&p);
        assert_eq!(first.len(), 1);
        assert_eq!(cal.batch_size(), 2);
        for d in first {
            cal.label(d, true);
        }
        let second = cal.cal_step(&p);
        assert_eq!(second.len(), 2);
        assert_eq!(cal.batch_size(), 3);
        // Batches never revisit labeled documents.
        for d in second {
            assert!(!cal.is_labeled(d));
        }
    }

    #[test]
    fn cal_step_truncates_and_then_terminates() {
        let docs = vec![doc("a", "one"), doc("b", "two")];
        let p = PreparedCorpus::new(&docs, 20);
        let mut cal = CalState::new("seed", 20, CalParams::default(), 3);
        cal.extend_view(0..2);
        cal.advance_batch(); // B=2
        cal.advance_batch(); // B=3 > pool
        let batch = cal.cal_step(&p);
        assert_eq!(batch.len(), 2, "pool smaller than B returns the whole pool");
        for d in batch {
            cal.label(d, false);
        }
        assert!(cal.pool_is_empty());
        assert!(cal.cal_step(&p).is_empty(), "empty pool is the terminal signal");
    }

    #[test]
    fn cal_steps_are_deterministic() {
        let docs = marker_corpus();
        let p = PreparedCorpus::new(&docs, 20);
        let run = |seed: u64| {
            let mut cal = CalState::new("zylkovian treborax", 20, CalParams::default(), seed);
            cal.extend_view(0..p.len());
            let mut picked = Vec::new();
            for _ in 0..4 {
                let batch = cal.cal_step(&p);
                for d in &batch {
                    cal.label(*d, p.docid(*d).starts_with('r'));
                }
                picked.extend(batch);
            }
            picked
        };
        assert_eq!(run(7), run(7));
    }
}
