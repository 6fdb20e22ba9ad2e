//! Comparative sentence identification.
//!
//! A two-class linear head `softmax(W·h + b)` over a sentence representation
//! `h`. The representation is pluggable: hashed n-gram counts computed here,
//! or dense vectors supplied per record id (for example pooled encoder
//! outputs). Class 0 is "comparative", class 1 "non-comparative".
//!
//! The module also hosts the annotation filter that drops non-comparative
//! records which are near-duplicates of comparative ones.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusRecord;

/// Number of hash buckets for n-gram features.
pub const DIMENSION: usize = 1 << 18;
pub const COMPARATIVE: usize = 0;
pub const NON_COMPARATIVE: usize = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsiError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no embedding vector for record {0:?}")]
    MissingVector(String),
    #[error("training corpus has a single class")]
    SingleClassCorpus,
    #[error("invalid feature vector: {0}")]
    InvalidFeature(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Sparse vector with sorted, unique indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dimension: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn new(dimension: usize, mut entries: Vec<(u32, f64)>) -> Result<Self, CsiError> {
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CsiError::InvalidFeature("duplicate index".into()));
        }
        if let Some((i, _)) = entries.iter().find(|(i, _)| *i as usize >= dimension) {
            return Err(CsiError::InvalidFeature(format!(
                "index {i} out of range for dimension {dimension}"
            )));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(CsiError::InvalidFeature("non-finite weight".into()));
        }
        entries.retain(|(_, v)| *v != 0.0);
        Ok(FeatureVector { dimension, entries })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self, CsiError> {
        let entries = values
            .iter()
            .enumerate()
            .map(|(i, v)| (i as u32, *v))
            .collect();
        Self::new(values.len(), entries)
    }

    pub fn zeros(dimension: usize) -> Self {
        FeatureVector {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(i, v)| v * dense[*i as usize])
            .sum()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> Result<f64, CsiError> {
    if a.dimension != b.dimension {
        return Err(CsiError::DimensionMismatch {
            expected: a.dimension,
            found: b.dimension,
        });
    }
    let denom = a.norm() * b.norm();
    Ok(if denom == 0.0 { 0.0 } else { a.dot(b) / denom })
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn bucket(feature: &str) -> u32 {
    (fnv1a(feature.as_bytes()) & (DIMENSION as u64 - 1)) as u32
}

/// Unnormalized bucket counts of word unigrams, word bigrams and character
/// 3- to 5-grams. Each family is namespaced before hashing.
pub fn hashed_counts(text: &str) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let mut add = |f: String| *counts.entry(bucket(&f)).or_default() += 1.0;
    let words: Vec<&str> = text.split_whitespace().collect();
    for w in &words {
        add(format!("w1:{w}"));
    }
    for pair in words.windows(2) {
        add(format!("w2:{} {}", pair[0], pair[1]));
    }
    let chars: Vec<char> = text.chars().collect();
    for n in 3..=5 {
        for gram in chars.windows(n) {
            add(format!("c{n}:{}", gram.iter().collect::<String>()));
        }
    }
    counts
}

/// L2-normalized hashed n-gram vector of `text`.
pub fn featurize(text: &str) -> FeatureVector {
    let counts = hashed_counts(text);
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let entries = counts
        .into_iter()
        .map(|(i, v)| (i, if norm > 0.0 { v / norm } else { 0.0 }))
        .collect();
    FeatureVector::new(DIMENSION, entries).expect("hashed features are in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    #[default]
    Hashed,
    External,
}

/// Where sentence representations come from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    Hashed,
    External(&'a HashMap<String, Vec<f64>>),
}

impl FeatureSource<'_> {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureSource::Hashed => FeatureKind::Hashed,
            FeatureSource::External(_) => FeatureKind::External,
        }
    }

    pub fn vector(&self, record: &CorpusRecord) -> Result<FeatureVector, CsiError> {
        match self {
            FeatureSource::Hashed => Ok(featurize(&record.text)),
            FeatureSource::External(map) => map
                .get(&record.id)
                .ok_or_else(|| CsiError::MissingVector(record.id.clone()))
                .and_then(|v| FeatureVector::from_dense(v)),
        }
    }

    pub fn vectors(&self, records: &[CorpusRecord]) -> Result<Vec<FeatureVector>, CsiError> {
        records.par_iter().map(|r| self.vector(r)).collect()
    }
}

/// Weight matrix (2 × dimension) and bias of the classification layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub dimension: usize,
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
}

impl LinearHead {
    pub fn zeros(dimension: usize) -> Self {
        LinearHead {
            dimension,
            weights: [vec![0.0; dimension], vec![0.0; dimension]],
            bias: [0.0; 2],
        }
    }

    pub fn logits(&self, fv: &FeatureVector) -> Result<[f64; 2], CsiError> {
        if fv.dimension != self.dimension {
            return Err(CsiError::DimensionMismatch {
                expected: self.dimension,
                found: fv.dimension,
            });
        }
        Ok([
            fv.dot_dense(&self.weights[0]) + self.bias[0],
            fv.dot_dense(&self.weights[1]) + self.bias[1],
        ])
    }

    /// `softmax(W·fv + b)` as (comparative, non-comparative).
    pub fn predict_proba(&self, fv: &FeatureVector) -> Result<[f64; 2], CsiError> {
        Ok(softmax(self.logits(fv)?))
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .fold(0.0f64, |m, w| m.max(w.abs()))
    }
}

pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

fn log_softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    [logits[0] - lse, logits[1] - lse]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub comparative: bool,
}

impl Example {
    fn target(&self) -> [f64; 2] {
        if self.comparative {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
    /// `None` trains full-batch; otherwise mini-batches in seeded order.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1.0,
            l2: 1e-4,
            seed: 13,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
}

/// Mean cross-entropy plus `l2 / 2 · ‖W‖²` (bias unregularized), and its
/// gradient.
pub fn loss_and_gradient(head: &LinearHead, examples: &[Example], l2: f64) -> (f64, Gradient) {
    let (data_loss, mut grad) = data_loss_and_gradient(head, examples.iter());
    let mut reg = 0.0;
    for k in 0..2 {
        for (g, w) in grad.weights[k].iter_mut().zip(&head.weights[k]) {
            *g += l2 * w;
            reg += w * w;
        }
    }
    (data_loss + 0.5 * l2 * reg, grad)
}

fn data_loss_and_gradient<'a>(
    head: &LinearHead,
    examples: impl ExactSizeIterator<Item = &'a Example>,
) -> (f64, Gradient) {
    let n = examples.len().max(1) as f64;
    let mut grad = Gradient {
        weights: [vec![0.0; head.dimension], vec![0.0; head.dimension]],
        bias: [0.0; 2],
    };
    let mut loss = 0.0;
    for ex in examples {
        let logits = head
            .logits(&ex.features)
            .expect("examples match the head dimension");
        let logp = log_softmax(logits);
        let y = ex.target();
        loss -= y[0] * logp[0] + y[1] * logp[1];
        for k in 0..2 {
            let delta = (logp[k].exp() - y[k]) / n;
            grad.bias[k] += delta;
            for (i, v) in ex.features.entries() {
                grad.weights[k][*i as usize] += delta * v;
            }
        }
    }
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full training objective before the first epoch and after each epoch.
    pub losses: Vec<f64>,
    pub accuracy: f64,
}

/// Gradient descent on the regularized cross-entropy. The L2 term is
/// applied as an implicit (proximal) shrink, which stays stable for any `l2`.
pub fn train(examples: &[Example], cfg: &TrainConfig) -> Result<(LinearHead, TrainReport), CsiError> {
    let Some(first) = examples.first() else {
        return Err(CsiError::SingleClassCorpus);
    };
    if examples.iter().all(|e| e.comparative) || examples.iter().all(|e| !e.comparative) {
        return Err(CsiError::SingleClassCorpus);
    }
    let dimension = first.features.dimension();
    if let Some(bad) = examples.iter().find(|e| e.features.dimension() != dimension) {
        return Err(CsiError::DimensionMismatch {
            expected: dimension,
            found: bad.features.dimension(),
        });
    }

    let mut head = LinearHead::zeros(dimension);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = cfg.batch_size.unwrap_or(examples.len()).max(1);
    let shrink = 1.0 / (1.0 + cfg.lr * cfg.l2);
    let mut losses = vec![loss_and_gradient(&head, examples, cfg.l2).0];

    for _ in 0..cfg.epochs {
        if cfg.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = data_loss_and_gradient(&head, chunk.iter().map(|&i| &examples[i]));
            for k in 0..2 {
                for (w, g) in head.weights[k].iter_mut().zip(&grad.weights[k]) {
                    *w = (*w - cfg.lr * g) * shrink;
                }
                head.bias[k] -= cfg.lr * grad.bias[k];
            }
        }
        losses.push(loss_and_gradient(&head, examples, cfg.l2).0);
    }

    let predicted: Vec<bool> = examples
        .iter()
        .map(|e| is_comparative(&head, &e.features, 0.5))
        .collect::<Result<_, _>>()?;
    let correct = predicted
        .iter()
        .zip(examples)
        .filter(|(p, e)| **p == e.comparative)
        .count();
    let accuracy = correct as f64 / examples.len() as f64;
    Ok((head, TrainReport { losses, accuracy }))
}

pub fn examples_from_corpus(
    corpus: &[CorpusRecord],
    source: FeatureSource<'_>,
) -> Result<Vec<Example>, CsiError> {
    let vectors = source.vectors(corpus)?;
    Ok(vectors
        .into_iter()
        .zip(corpus)
        .map(|(features, r)| Example {
            features,
            comparative: r.is_comparative(),
        })
        .collect())
}

/// Comparative when P(comparative) ≥ `threshold`.
pub fn is_comparative(
    head: &LinearHead,
    fv: &FeatureVector,
    threshold: f64,
) -> Result<bool, CsiError> {
    Ok(head.predict_proba(fv)?[COMPARATIVE] >= threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BinaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

/// P/R/F1 with `true` as the positive class; 0/0 is 0.
pub fn binary_scores(predicted: &[bool], gold: &[bool]) -> BinaryScores {
    assert_eq!(predicted.len(), gold.len());
    let mut s = BinaryScores::default();
    for (p, g) in predicted.iter().zip(gold) {
        match (p, g) {
            (true, true) => s.tp += 1,
            (true, false) => s.fp += 1,
            (false, true) => s.fn_ += 1,
            (false, false) => s.tn += 1,
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    s.precision = div(s.tp, s.tp + s.fp);
    s.recall = div(s.tp, s.tp + s.fn_);
    s.f1 = if s.precision + s.recall == 0.0 {
        0.0
    } else {
        2.0 * s.precision * s.recall / (s.precision + s.recall)
    };
    s
}

pub fn evaluate_csi(
    head: &LinearHead,
    corpus: &[CorpusRecord],
    source: FeatureSource<'_>,
    threshold: f64,
) -> Result<BinaryScores, CsiError> {
    let vectors = source.vectors(corpus)?;
    let predicted = vectors
        .iter()
        .map(|v| is_comparative(head, v, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let gold: Vec<bool> = corpus.iter().map(CorpusRecord::is_comparative).collect();
    Ok(binary_scores(&predicted, &gold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityBackend {
    ExternalVectors,
    #[default]
    Lexical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub threshold: f64,
    pub backend: SimilarityBackend,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            threshold: 0.8,
            backend: SimilarityBackend::Lexical,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<CorpusRecord>,
    pub removed_ids: Vec<String>,
    /// Highest similarity to a comparative record, per removed id.
    pub removed_scores: Vec<f64>,
}

/// Drops non-comparative records whose best cosine similarity to any
/// comparative record reaches the threshold. Comparative records are kept.
pub fn filter_unannotated(
    corpus: &[CorpusRecord],
    cfg: &SimilarityConfig,
    vectors: Option<&HashMap<String, Vec<f64>>>,
) -> Result<FilterOutcome, CsiError> {
    let source = match cfg.backend {
        SimilarityBackend::Lexical => FeatureSource::Hashed,
        SimilarityBackend::ExternalVectors => FeatureSource::External(
            vectors.ok_or_else(|| CsiError::InvalidFeature("no embedding vectors supplied".into()))?,
        ),
    };
    let features = source.vectors(corpus)?;
    let comparative: Vec<&FeatureVector> = features
        .iter()
        .zip(corpus)
        .filter(|(_, r)| r.is_comparative())
        .map(|(f, _)| f)
        .collect();

    let best: Vec<Option<f64>> = features
        .par_iter()
        .zip(corpus)
        .map(|(f, r)| {
            if r.is_comparative() || comparative.is_empty() {
                return Ok(None);
            }
            let mut max = f64::NEG_INFINITY;
            for c in &comparative {
                max = max.max(cosine(f, c)?);
            }
            Ok(Some(max))
        })
        .collect::<Result<_, CsiError>>()?;

    let mut out = FilterOutcome {
        kept: Vec::new(),
        removed_ids: Vec::new(),
        removed_scores: Vec::new(),
    };
    for (record, score) in corpus.iter().zip(best) {
        match score {
            Some(s) if s >= cfg.threshold => {
                out.removed_ids.push(record.id.clone());
                out.removed_scores.push(s);
            }
            _ => out.kept.push(record.clone()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dimension: usize,
    pub features: FeatureKind,
    pub bias: [f64; 2],
    /// Non-zero columns of W as `[index, w_comparative, w_non_comparative]`.
    pub weights: Vec<(u32, f64, f64)>,
    pub hyperparams: TrainConfig,
    pub seed: u64,
}

impl ModelFile {
    pub fn from_head(head: &LinearHead, features: FeatureKind, hyperparams: TrainConfig) -> Self {
        let weights = (0..head.dimension)
            .filter(|&i| head.weights[0][i] != 0.0 || head.weights[1][i] != 0.0)
            .map(|i| (i as u32, head.weights[0][i], head.weights[1][i]))
            .collect();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dimension: head.dimension,
            features,
            bias: head.bias,
            weights,
            hyperparams,
            seed: hyperparams.seed,
        }
    }

    pub fn to_head(&self) -> Result<LinearHead, CsiError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(CsiError::InvalidModel(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let mut head = LinearHead::zeros(self.dimension);
        head.bias = self.bias;
        for &(i, w0, w1) in &self.weights {
            let i = i as usize;
            if i >= self.dimension {
                return Err(CsiError::InvalidModel(format!("weight index {i} out of range")));
            }
            head.weights[0][i] = w0;
            head.weights[1][i] = w1;
        }
        if !head.bias.iter().chain(head.weights.iter().flatten()).all(|v| v.is_finite()) {
            return Err(CsiError::InvalidModel("non-finite parameter".into()));
        }
        Ok(head)
    }
}
