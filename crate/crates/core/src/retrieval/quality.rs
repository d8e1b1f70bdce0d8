//! Content-only document quality scoring (static rank).
//!
//! A linear classifier over hashed character-4-gram features, trained with
//! single-pass online logistic regression. Scores depend only on document
//! text, never on a query, so they are computed once per corpus and reused
//! for every cache fraction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Document, LabelKind, RetrievalError};

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct QualityTrainParams {
    pub learning_rate: f64,
    /// Feature space is `2^hash_bits` slots.
    pub hash_bits: u32,
    /// Passes over the shuffled training set.
    pub epochs: usize,
    /// Seed for example shuffling.
    pub seed: u64,
}

impl Default for QualityTrainParams {
    fn default() -> QualityTrainParams {
        QualityTrainParams { learning_rate: 0.002, hash_bits: 20, epochs: 1, seed: 0 }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hashed binary features: every distinct character 4-gram of the
/// lowercased text, FNV-1a-hashed into `2^hash_bits` slots. Texts shorter
/// than 4 characters contribute their whole text as one feature; the empty
/// text has no features. Sorted and deduplicated.
pub fn hashed_features(text: &str, hash_bits: u32) -> Vec<u32> {
    assert!((1..=32).contains(&hash_bits), "hash_bits out of range: {hash_bits}");
    let mask = (1u64 << hash_bits) - 1;
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut feats: Vec<u32> = Vec::new();
    if chars.len() < 4 {
        if !chars.is_empty() {
            feats.push((fnv1a(lower.as_bytes()) & mask) as u32);
        }
    } else {
        let mut buf = String::with_capacity(16);
        for w in chars.windows(4) {
            buf.clear();
            buf.extend(w.iter());
            feats.push((fnv1a(buf.as_bytes()) & mask) as u32);
        }
    }
    feats.sort_unstable();
    feats.dedup();
    feats
}

fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

/// A trained quality classifier. Higher scores mean higher predicted
/// quality; `score_text` returns the logistic probability in (0, 1).
#[derive(Debug)]
pub struct QualityModel {
    weights: Vec<f32>,
    bias: f32,
    hash_bits: u32,
}

impl QualityModel {
    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    fn margin(&self, feats: &[u32]) -> f64 {
        let mut m = self.bias as f64;
        for &f in feats {
            m += self.weights[f as usize] as f64;
        }
        m
    }

    /// Scores already-hashed features (must come from the same hash_bits).
    pub fn score_features(&self, feats: &[u32]) -> f64 {
        sigmoid(self.margin(feats))
    }

    pub fn score_text(&self, text: &str) -> f64 {
        self.score_features(&hashed_features(text, self.hash_bits))
    }
}

/// Trains a logistic model over prehashed feature vectors. `examples` pairs
/// each feature vector with its class (true = positive). Example order is
/// reshuffled each epoch from `params.seed`.
pub fn train_from_features(
    examples: &[(&[u32], bool)],
    params: &QualityTrainParams,
) -> QualityModel {
    let mut model = QualityModel {
        weights: vec![0.0; 1usize << params.hash_bits],
        bias: 0.0,
        hash_bits: params.hash_bits,
    };
    let lr = params.learning_rate;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (feats, positive) = examples[i];
            let y = if positive { 1.0 } else { 0.0 };
            let g = (sigmoid(model.margin(feats)) - y) * lr;
            for &f in feats {
                model.weights[f as usize] -= g as f32;
            }
            model.bias -= g as f32;
        }
    }
    model
}

/// Trains a quality model from positive and negative documents. Both
/// classes must be non-empty.
pub fn train_quality<'a>(
    positives: impl IntoIterator<Item = &'a Document>,
    negatives: impl IntoIterator<Item = &'a Document>,
    params: &QualityTrainParams,
) -> Result<QualityModel, RetrievalError> {
    let mut feats: Vec<(Vec<u32>, bool)> = Vec::new();
    for d in positives {
        feats.push((hashed_features(&d.text, params.hash_bits), true));
    }
    if feats.is_empty() {
        return Err(RetrievalError::EmptyClass { class: "positive" });
    }
    let n_pos = feats.len();
    for d in negatives {
        feats.push((hashed_features(&d.text, params.hash_bits), false));
    }
    if feats.len() == n_pos {
        return Err(RetrievalError::EmptyClass { class: "negative" });
    }
    let borrowed: Vec<(&[u32], bool)> = feats.iter().map(|(f, y)| (f.as_slice(), *y)).collect();
    Ok(train_from_features(&borrowed, params))
}

/// The standard training split for cache ranking: documents labeled
/// relevant (any topic) are positives; spam plus a seeded random sample of
/// at most `max_nonrelevant` nonrelevant documents are negatives.
pub fn quality_training_split(
    docs: &[Document],
    max_nonrelevant: usize,
    seed: u64,
) -> (Vec<&Document>, Vec<&Document>) {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut nonrel = Vec::new();
    for d in docs {
        match d.label {
            Some(LabelKind::Relevant) => positives.push(d),
            Some(LabelKind::Spam) => negatives.push(d),
            Some(LabelKind::Nonrelevant) => nonrel.push(d),
            None => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nonrel.shuffle(&mut rng);
    nonrel.truncate(max_nonrelevant);
    negatives.extend(nonrel);
    (positives, negatives)
}

/// Area under the ROC curve for positive vs negative score samples; ties
/// count half. Exhaustive pair counting, intended for evaluation in tests.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    assert!(!pos.is_empty() && !neg.is_empty(), "auc needs both classes");
    let mut num = 0.0;
    for p in pos {
        for n in neg {
            num += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    num / (pos.len() as f64 * neg.len() as f64)
}
