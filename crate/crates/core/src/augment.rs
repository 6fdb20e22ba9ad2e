//! Element-replacement data augmentation.
//!
//! 1. Collect the surface phrases of every gold subject, object and aspect,
//!    and every (predicate, label) pair.
//! 2. For each comparative record, replace spans by phrases drawn from those
//!    sets. Predicates are always swapped together with their label.
//!    Sentence tokens are spliced and every index in the record is shifted.
//! 3. Drop duplicates and records whose quintuples can no longer be located
//!    in their sentence, balance by the number of present elements, and
//!    append the survivors to the original corpus.
//!
//! Every record gets its own RNG stream derived from the seed and the
//! record's position, so results do not depend on scheduling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align_quintuple, AlignmentConfig};
use crate::corpus::{
    normalize_text, tokenize, ComparisonLabel, CorpusError, CorpusRecord, Element, ElementSpan, Quintuple,
};

/// RNG stream reserved for balancing; record streams use their index.
const BALANCE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AugmentError {
    #[error("record {0:?} has no quintuples")]
    NonComparative(String),
    #[error("record {0:?} has a discontiguous span")]
    DiscontiguousSpan(String),
    #[error("record {0:?} has overlapping spans")]
    OverlappingSpans(String),
}

/// Gold phrases per element, one entry per occurrence, in corpus order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSets {
    pub subjects: Vec<String>,
    pub objects: Vec<String>,
    pub aspects: Vec<String>,
    pub predicate_label_pairs: Vec<(String, ComparisonLabel)>,
}

impl WordSets {
    fn phrases(&self, element: Element) -> &[String] {
        match element {
            Element::Subject => &self.subjects,
            Element::Object => &self.objects,
            Element::Aspect => &self.aspects,
            Element::Predicate => &[],
        }
    }

    pub fn contains_pair(&self, predicate: &str, label: ComparisonLabel) -> bool {
        self.predicate_label_pairs
            .iter()
            .any(|(p, l)| p == predicate && *l == label)
    }
}

pub fn collect_word_sets(corpus: &[CorpusRecord]) -> WordSets {
    let mut sets = WordSets::default();
    for q in corpus.iter().flat_map(|r| &r.quintuples) {
        let text = |s: &Option<ElementSpan>| s.as_ref().map(|s| normalize_text(&s.text()));
        sets.subjects.extend(text(&q.subject));
        sets.objects.extend(text(&q.object));
        sets.aspects.extend(text(&q.aspect));
        sets.predicate_label_pairs
            .push((normalize_text(&q.predicate.text()), q.label));
    }
    sets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BalanceMode {
    /// Downsample every bucket to the smallest non-empty bucket.
    #[default]
    Min,
    /// Keep at most this many records per bucket.
    Cap(usize),
    Off,
}

impl fmt::Display for BalanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BalanceMode::Min => f.write_str("min"),
            BalanceMode::Cap(n) => write!(f, "cap:{n}"),
            BalanceMode::Off => f.write_str("off"),
        }
    }
}

impl FromStr for BalanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(BalanceMode::Min),
            "off" => Ok(BalanceMode::Off),
            _ => s
                .strip_prefix("cap:")
                .and_then(|n| n.parse().ok())
                .map(BalanceMode::Cap)
                .ok_or_else(|| format!("expected min, off or cap:N, got {s:?}")),
        }
    }
}

/// Which quintuple of a multi-quintuple record decides its bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketKey {
    #[default]
    First,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub seed: u64,
    pub per_record_samples: usize,
    pub replace_probability: f64,
    pub balance: BalanceMode,
    pub bucket: BucketKey,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            seed: 13,
            per_record_samples: 1,
            replace_probability: 0.5,
            balance: BalanceMode::Min,
            bucket: BucketKey::First,
        }
    }
}

/// Generator for the record at `index` of the corpus.
pub fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// A distinct token range used by one or more elements of the record.
#[derive(Debug, Clone)]
struct Slot {
    start: usize,
    end: usize,
    /// Predicate slots swap labels; otherwise the first element using it.
    role: Element,
}

fn collect_slots(record: &CorpusRecord) -> Result<Vec<Slot>, AugmentError> {
    let mut slots: BTreeMap<(usize, usize), Element> = BTreeMap::new();
    for q in &record.quintuples {
        for (element, span) in q.spans() {
            if !span.is_contiguous() {
                return Err(AugmentError::DiscontiguousSpan(record.id.clone()));
            }
            let role = slots.entry((span.start(), span.end())).or_insert(element);
            if element == Element::Predicate {
                *role = Element::Predicate;
            }
        }
    }
    let slots: Vec<Slot> = slots
        .into_iter()
        .map(|((start, end), role)| Slot { start, end, role })
        .collect();
    if slots.windows(2).any(|w| w[1].start <= w[0].end) {
        return Err(AugmentError::OverlappingSpans(record.id.clone()));
    }
    Ok(slots)
}

/// Produces `cfg.per_record_samples` variants of a comparative record.
/// Elements whose word set is empty are left unchanged.
pub fn augment_record<R: Rng>(
    record: &CorpusRecord,
    word_sets: &WordSets,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<CorpusRecord>, AugmentError> {
    if !record.is_comparative() {
        return Err(AugmentError::NonComparative(record.id.clone()));
    }
    let slots = collect_slots(record)?;
    let p = cfg.replace_probability.clamp(0.0, 1.0);
    let mut variants = Vec::with_capacity(cfg.per_record_samples);

    for k in 0..cfg.per_record_samples {
        // Replacement tokens and optional new label per slot.
        let mut replacement: Vec<Replacement> = vec![None; slots.len()];
        for (slot, out) in slots.iter().zip(replacement.iter_mut()) {
            if !rng.gen_bool(p) {
                continue;
            }
            if slot.role == Element::Predicate {
                let pairs = &word_sets.predicate_label_pairs;
                if !pairs.is_empty() {
                    let (phrase, label) = &pairs[rng.gen_range(0..pairs.len())];
                    let tokens = tokenize(&normalize_text(phrase));
                    if !tokens.is_empty() {
                        *out = Some((tokens, Some(*label)));
                    }
                }
            } else {
                let phrases = word_sets.phrases(slot.role);
                if !phrases.is_empty() {
                    let phrase = &phrases[rng.gen_range(0..phrases.len())];
                    let tokens = tokenize(&normalize_text(phrase));
                    if !tokens.is_empty() {
                        *out = Some((tokens, None));
                    }
                }
            }
        }
        variants.push(splice(record, &slots, &replacement, k + 1));
    }
    Ok(variants)
}

type Replacement = Option<(Vec<String>, Option<ComparisonLabel>)>;

fn splice(
    record: &CorpusRecord,
    slots: &[Slot],
    replacement: &[Replacement],
    variant: usize,
) -> CorpusRecord {
    let mut tokens = record.tokens.clone();
    // Right to left so earlier positions stay valid while splicing.
    for (slot, rep) in slots.iter().zip(replacement).rev() {
        if let Some((new_tokens, _)) = rep {
            tokens.splice(slot.start - 1..slot.end, new_tokens.iter().cloned());
        }
    }

    // New (start, len) per slot from cumulative length deltas.
    let mut shift: isize = 0;
    let mut placed: BTreeMap<(usize, usize), (usize, usize, Option<ComparisonLabel>)> =
        BTreeMap::new();
    for (slot, rep) in slots.iter().zip(replacement) {
        let old_len = slot.end - slot.start + 1;
        let (new_len, label) = match rep {
            Some((t, label)) => (t.len(), *label),
            None => (old_len, None),
        };
        let new_start = (slot.start as isize + shift) as usize;
        placed.insert((slot.start, slot.end), (new_start, new_len, label));
        shift += new_len as isize - old_len as isize;
    }

    let relocate = |span: &ElementSpan| {
        let (start, len, _) = placed[&(span.start(), span.end())];
        ElementSpan::from_window(&tokens, start, len)
    };
    let quintuples = record
        .quintuples
        .iter()
        .map(|q| {
            let (_, _, new_label) = placed[&(q.predicate.start(), q.predicate.end())];
            Quintuple {
                subject: q.subject.as_ref().map(relocate),
                object: q.object.as_ref().map(relocate),
                aspect: q.aspect.as_ref().map(relocate),
                predicate: relocate(&q.predicate),
                label: new_label.unwrap_or(q.label),
            }
        })
        .collect();

    CorpusRecord {
        id: format!("{}#aug{variant}", record.id),
        text: tokens.join(" "),
        tokens,
        quintuples,
    }
}

/// Present-element count used for balancing.
pub fn bucket_of(record: &CorpusRecord, key: BucketKey) -> usize {
    match key {
        BucketKey::First => record
            .quintuples
            .first()
            .map_or(0, Quintuple::present_elements),
        BucketKey::Max => record
            .quintuples
            .iter()
            .map(Quintuple::present_elements)
            .max()
            .unwrap_or(0),
    }
}

/// Why an augmented record was dropped. Records whose spans no longer
/// match their sentence, or cannot be re-aligned, are missing orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Duplicate,
    Invalid,
    MissingOrder,
    Balanced,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BalanceOutcome {
    pub records: Vec<CorpusRecord>,
    pub dropped: Vec<(String, DropReason)>,
}

/// True when every quintuple can be located again in its own sentence.
fn realigns(record: &CorpusRecord, align_cfg: &AlignmentConfig) -> bool {
    record
        .quintuples
        .iter()
        .all(|q| align_quintuple(&record.tokens, &q.to_bare(), align_cfg).is_ok())
}

pub fn balance_and_filter(
    original: &[CorpusRecord],
    augmented: &[CorpusRecord],
    cfg: &AugmentConfig,
    align_cfg: &AlignmentConfig,
) -> BalanceOutcome {
    let mut out = BalanceOutcome::default();
    let mut seen: HashSet<String> = original.iter().map(|r| normalize_text(&r.text)).collect();
    let mut survivors: Vec<&CorpusRecord> = Vec::new();

    for record in augmented {
        if !seen.insert(normalize_text(&record.text)) {
            out.dropped.push((record.id.clone(), DropReason::Duplicate));
        } else if let Err(e) = record.validate() {
            let reason = match e {
                CorpusError::TokenMismatch { .. } | CorpusError::IndexOutOfBounds { .. } => {
                    DropReason::MissingOrder
                }
                _ => DropReason::Invalid,
            };
            out.dropped.push((record.id.clone(), reason));
        } else if !realigns(record, align_cfg) {
            out.dropped.push((record.id.clone(), DropReason::MissingOrder));
        } else {
            survivors.push(record);
        }
    }

    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in survivors.iter().enumerate() {
        buckets.entry(bucket_of(r, cfg.bucket)).or_default().push(i);
    }
    let limit = match cfg.balance {
        BalanceMode::Off => usize::MAX,
        BalanceMode::Cap(n) => n,
        BalanceMode::Min => buckets.values().map(Vec::len).min().unwrap_or(0),
    };
    let mut rng = record_rng(cfg.seed, 0);
    rng.set_stream(BALANCE_STREAM);
    let mut keep = vec![false; survivors.len()];
    for members in buckets.values() {
        if members.len() <= limit {
            members.iter().for_each(|&i| keep[i] = true);
        } else {
            for j in sample(&mut rng, members.len(), limit) {
                keep[members[j]] = true;
            }
        }
    }

    out.records = original.to_vec();
    for (record, kept) in survivors.into_iter().zip(keep) {
        if kept {
            out.records.push(record.clone());
        } else {
            out.dropped.push((record.id.clone(), DropReason::Balanced));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentOutcome {
    pub records: Vec<CorpusRecord>,
    pub generated: usize,
    pub skipped: Vec<AugmentError>,
    pub dropped: Vec<(String, DropReason)>,
}

/// Word-set collection, per-record augmentation and balancing in one pass.
pub fn augment_corpus(
    corpus: &[CorpusRecord],
    cfg: &AugmentConfig,
    align_cfg: &AlignmentConfig,
) -> AugmentOutcome {
    let sets = collect_word_sets(corpus);
    let results: Vec<_> = corpus
        .par_iter()
        .enumerate()
        .filter(|(_, r)| r.is_comparative())
        .map(|(i, r)| augment_record(r, &sets, cfg, &mut record_rng(cfg.seed, i)))
        .collect();
    let mut augmented = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(v) => augmented.extend(v),
            Err(e) => skipped.push(e),
        }
    }
    let generated = augmented.len();
    let balanced = balance_and_filter(corpus, &augmented, cfg, align_cfg);
    AugmentOutcome {
        records: balanced.records,
        generated,
        skipped,
        dropped: balanced.dropped,
    }
}
