//! Seeded synthetic corpus generation.
//!
//! Builds a desk-scale labeled collection from pseudo-word vocabularies:
//! a shared background vocabulary, one disjoint vocabulary per topic, and a
//! spam vocabulary. Relevant documents lean on their topic's vocabulary,
//! nonrelevant documents are mostly background with a topical tinge, and
//! spam leans on the spam vocabulary, so retrieval and quality ranking have
//! real signal to find. Every document carries a label and a latent quality
//! score drawn from a class-dependent range, and low-quality pages leak
//! junk vocabulary in proportion, putting the quality signal in the text
//! itself rather than only in the hidden score.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Document, LabelKind, TopicDescriptor};
use crate::sessionlog::TopicQueries;

#[derive(Debug, Clone)]
pub struct CorpusGenConfig {
    pub n_docs: usize,
    pub n_topics: usize,
    /// Fraction of the corpus relevant to each topic.
    pub prevalence: f64,
    /// Fraction of the corpus that is spam.
    pub spam_fraction: f64,
    /// Mean document length in words; actual lengths vary uniformly
    /// between half and one-and-a-half times this.
    pub words_per_doc: usize,
    pub seed: u64,
}

impl Default for CorpusGenConfig {
    fn default() -> CorpusGenConfig {
        CorpusGenConfig {
            n_docs: 2000,
            n_topics: 5,
            prevalence: 0.05,
            spam_fraction: 0.10,
            words_per_doc: 120,
            seed: 7,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du", "ka", "ke", "ki", "ko", "ku",
    "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
    "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su", "ta", "te", "ti", "to", "tu",
    "va", "ve", "vi", "vo", "vu", "za", "ze", "zi", "zo", "zu",
];

const SHARED_VOCAB: usize = 300;
const TOPIC_VOCAB: usize = 60;
const SPAM_VOCAB: usize = 80;
const DESCRIPTION_WORDS: usize = 12;

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(SYLLABLES[rng.gen_range(0..SYLLABLES.len())]);
    }
    w
}

/// Draws `n` pseudo-words not already in `taken`, adding them to it.
fn fresh_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Vocabs {
    shared: Vec<String>,
    topics: Vec<Vec<String>>,
    spam: Vec<String>,
}

fn build_vocabs(rng: &mut ChaCha8Rng, n_topics: usize) -> Vocabs {
    let mut taken = BTreeSet::new();
    Vocabs {
        shared: fresh_words(rng, SHARED_VOCAB, &mut taken),
        topics: (0..n_topics).map(|_| fresh_words(rng, TOPIC_VOCAB, &mut taken)).collect(),
        spam: fresh_words(rng, SPAM_VOCAB, &mut taken),
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [String]) -> &'a str {
    &words[rng.gen_range(0..words.len())]
}

/// Word-source mix per document class. Relevant documents are nearly half
/// topic vocabulary; nonrelevant ones mention the topic but are mostly
/// background; spam is dominated by spam vocabulary. Non-spam documents
/// additionally leak junk vocabulary at a rate falling with their latent
/// quality, so content alone carries a quality signal a static ranker can
/// learn.
fn compose_text(
    rng: &mut ChaCha8Rng,
    vocabs: &Vocabs,
    label: LabelKind,
    topic_idx: Option<usize>,
    quality: f64,
    n_words: usize,
) -> String {
    let junk_rate = match label {
        LabelKind::Spam => 0.0,
        _ => 0.6 * (1.0 - quality),
    };
    let mut words: Vec<&str> = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        if junk_rate > 0.0 && rng.gen::<f64>() < junk_rate {
            words.push(pick(rng, &vocabs.spam));
            continue;
        }
        let r: f64 = rng.gen();
        let word = match (label, topic_idx) {
            (LabelKind::Relevant, Some(t)) => {
                if r < 0.45 {
                    pick(rng, &vocabs.topics[t])
                } else if r < 0.95 || vocabs.topics.len() == 1 {
                    pick(rng, &vocabs.shared)
                } else {
                    let other = other_topic(rng, vocabs.topics.len(), t);
                    pick(rng, &vocabs.topics[other])
                }
            }
            (LabelKind::Nonrelevant, Some(t)) => {
                if r < 0.12 {
                    pick(rng, &vocabs.topics[t])
                } else if r < 0.94 || vocabs.topics.len() == 1 {
                    pick(rng, &vocabs.shared)
                } else {
                    let other = other_topic(rng, vocabs.topics.len(), t);
                    pick(rng, &vocabs.topics[other])
                }
            }
            (LabelKind::Spam, _) => {
                if r < 0.70 {
                    pick(rng, &vocabs.spam)
                } else {
                    pick(rng, &vocabs.shared)
                }
            }
            (_, None) => pick(rng, &vocabs.shared),
        };
        words.push(word);
    }
    words.join(" ")
}

fn other_topic(rng: &mut ChaCha8Rng, n_topics: usize, not: usize) -> usize {
    let pick = rng.gen_range(0..n_topics - 1);
    if pick >= not {
        pick + 1
    } else {
        pick
    }
}

fn latent_quality(rng: &mut ChaCha8Rng, label: LabelKind) -> f64 {
    let u: f64 = rng.gen();
    match label {
        LabelKind::Relevant => 0.75 + 0.2 * u,
        LabelKind::Nonrelevant => 0.4 + 0.3 * u,
        LabelKind::Spam => 0.05 + 0.2 * u,
    }
}

/// Generates a labeled corpus. Per-class counts are exact: each topic gets
/// `round(prevalence * n_docs)` relevant documents and the corpus gets
/// `round(spam_fraction * n_docs)` spam documents; the rest are nonrelevant
/// with a uniformly assigned topic.
pub fn generate_corpus(config: &CorpusGenConfig) -> Corpus {
    let n_rel = (config.prevalence * config.n_docs as f64).round() as usize;
    let n_spam = (config.spam_fraction * config.n_docs as f64).round() as usize;
    assert!(
        n_rel * config.n_topics + n_spam <= config.n_docs,
        "prevalence and spam fraction exceed the corpus: {} relevant x {} topics + {} spam > {} docs",
        n_rel,
        config.n_topics,
        n_spam,
        config.n_docs
    );
    assert!(config.n_topics >= 1, "need at least one topic");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocabs = build_vocabs(&mut rng, config.n_topics);

    let topics: Vec<TopicDescriptor> = (0..config.n_topics)
        .map(|t| TopicDescriptor {
            topic: format!("t{:02}", t + 1),
            description: vocabs.topics[t]
                .choose_multiple(&mut rng, DESCRIPTION_WORDS)
                .cloned()
                .collect::<Vec<String>>()
                .join(" "),
        })
        .collect();

    let mut assignments: Vec<(LabelKind, Option<usize>)> = Vec::with_capacity(config.n_docs);
    for t in 0..config.n_topics {
        assignments.extend(std::iter::repeat_n((LabelKind::Relevant, Some(t)), n_rel));
    }
    assignments.extend(std::iter::repeat_n((LabelKind::Spam, None), n_spam));
    while assignments.len() < config.n_docs {
        let t = rng.gen_range(0..config.n_topics);
        assignments.push((LabelKind::Nonrelevant, Some(t)));
    }
    assignments.shuffle(&mut rng);

    let min_words = (config.words_per_doc / 2).max(1);
    let max_words = (config.words_per_doc * 3 / 2).max(min_words);
    let docs: Vec<Document> = assignments
        .into_iter()
        .enumerate()
        .map(|(i, (label, topic_idx))| {
            let n_words = rng.gen_range(min_words..=max_words);
            let quality = latent_quality(&mut rng, label);
            let text = compose_text(&mut rng, &vocabs, label, topic_idx, quality, n_words);
            Document {
                docid: format!("d{i:05}"),
                text,
                topic: topic_idx.map(|t| topics[t].topic.clone()),
                label: Some(label),
                quality: Some(quality),
            }
        })
        .collect();

    Corpus { docs, topics }
}

/// Builds a query pool from topic descriptions: `per_topic` queries of one
/// to three words drawn from each topic's description.
pub fn make_query_pool(corpus: &Corpus, per_topic: usize, seed: u64) -> Vec<TopicQueries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus
        .topics
        .iter()
        .map(|t| {
            let words: Vec<&str> = t.description.split_whitespace().collect();
            assert!(!words.is_empty(), "topic {} has an empty description", t.topic);
            let queries = (0..per_topic)
                .map(|_| {
                    let len = rng.gen_range(1..=3usize.min(words.len()));
                    words
                        .choose_multiple(&mut rng, len)
                        .copied()
                        .collect::<Vec<&str>>()
                        .join(" ")
                })
                .collect();
            TopicQueries { topic: t.topic.clone(), queries }
        })
        .collect()
}
