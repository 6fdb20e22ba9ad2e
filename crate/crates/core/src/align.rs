//! Token-index recovery for bare quintuples.
//!
//! Every present element of a generated quintuple is matched against
//! contiguous token windows of the sentence by normalized Levenshtein
//! similarity. When an element matches in several places, one window per
//! element is chosen jointly:
//!
//! 1. windows of different elements should not overlap, if any such choice exists;
//! 2. the summed similarity is maximal;
//! 3. the summed pairwise distance between window centers is minimal;
//! 4. subject, object, aspect and predicate are leftmost, in that order.
//!
//! Similarity comes before distance so that a nearby partial window never
//! beats an exact one; distance decides between equally good matches.
//!
//! The chosen spans copy their tokens from the sentence, never from the
//! generated text, so the result always validates against the sentence.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, tokenize, BareQuintuple, Element, ElementSpan, Quintuple};

/// Slack when comparing a similarity against the threshold, so that exact
/// ratios such as 4/5 are not lost to rounding.
const SCORE_EPSILON: f64 = 1e-9;

/// Scores are summed as integers in these units so that every summation
/// order gives the same total.
const SCORE_UNITS: f64 = 1e9;

fn score_units(score: f64) -> i64 {
    (score * SCORE_UNITS).round() as i64
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("quintuple has no predicate to align")]
    MissingPredicate,
    #[error("no candidate span for {0}")]
    NoCandidate(Element),
    #[error("invalid alignment config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    /// Minimum similarity in (0, 1] for a window to count as a match.
    pub fuzzy_threshold: f64,
    /// Windows may be this many tokens shorter or longer than the element.
    pub max_span_slack: usize,
    pub case_fold: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            fuzzy_threshold: 0.8,
            max_span_slack: 1,
            case_fold: true,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.fuzzy_threshold > 0.0 && self.fuzzy_threshold <= 1.0) {
            return Err(AlignError::InvalidConfig(format!(
                "fuzzy_threshold must be in (0, 1], got {}",
                self.fuzzy_threshold
            )));
        }
        Ok(())
    }
}

/// A window of `length` tokens starting at 1-based `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateSpan {
    pub start: usize,
    pub length: usize,
    pub score: f64,
}

impl CandidateSpan {
    pub fn end(&self) -> usize {
        self.start + self.length - 1
    }

    /// Twice the center position, kept integral.
    fn center2(&self) -> u64 {
        (2 * self.start + self.length - 1) as u64
    }

    fn overlaps(&self, other: &CandidateSpan) -> bool {
        self.start <= other.end() && other.start <= self.end()
    }
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max_len`; two empty strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

fn fold(s: &str, case_fold: bool) -> String {
    if case_fold {
        s.to_lowercase()
    } else {
        s.to_string()
    }
}

/// Windows of the sentence matching `element_text`, sorted by score
/// (descending), then start and length (ascending).
pub fn candidate_spans(
    tokens: &[String],
    element_text: &str,
    cfg: &AlignmentConfig,
) -> Vec<CandidateSpan> {
    let target = fold(&normalize_text(element_text), cfg.case_fold);
    let n = tokenize(&target).len();
    if n == 0 || tokens.is_empty() {
        return Vec::new();
    }
    let folded: Vec<String> = tokens.iter().map(|t| fold(t, cfg.case_fold)).collect();
    let min_len = n.saturating_sub(cfg.max_span_slack).max(1);
    let max_len = (n + cfg.max_span_slack).min(tokens.len());

    let mut out = Vec::new();
    for length in min_len..=max_len {
        for start in 1..=tokens.len() + 1 - length {
            let window = folded[start - 1..start - 1 + length].join(" ");
            let score = similarity(&window, &target);
            if score + SCORE_EPSILON >= cfg.fuzzy_threshold {
                out.push(CandidateSpan {
                    start,
                    length,
                    score,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start.cmp(&b.start))
            .then(a.length.cmp(&b.length))
    });
    out
}

/// Ranking of one joint choice of windows; smaller is better.
#[derive(Debug, Clone)]
struct SelectionKey {
    overlap: bool,
    score: i64,
    distance: u64,
    positions: Vec<(usize, usize)>,
}

impl SelectionKey {
    fn of(choice: &[CandidateSpan]) -> Self {
        SelectionKey {
            overlap: any_overlap(choice),
            score: choice.iter().map(|c| score_units(c.score)).sum(),
            distance: pairwise_distance(choice),
            positions: choice.iter().map(|c| (c.start, c.length)).collect(),
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        self.overlap
            .cmp(&other.overlap)
            .then(other.score.cmp(&self.score))
            .then(self.distance.cmp(&other.distance))
            .then(self.positions.cmp(&other.positions))
    }
}

fn any_overlap(choice: &[CandidateSpan]) -> bool {
    choice
        .iter()
        .enumerate()
        .any(|(i, a)| choice[i + 1..].iter().any(|b| a.overlaps(b)))
}

fn pairwise_distance(choice: &[CandidateSpan]) -> u64 {
    choice
        .iter()
        .enumerate()
        .map(|(i, a)| {
            choice[i + 1..]
                .iter()
                .map(|b| a.center2().abs_diff(b.center2()))
                .sum::<u64>()
        })
        .sum()
}

struct Prepared {
    elements: Vec<Element>,
    candidates: Vec<Vec<CandidateSpan>>,
}

fn prepare(
    tokens: &[String],
    bare: &BareQuintuple,
    cfg: &AlignmentConfig,
) -> Result<Prepared, AlignError> {
    cfg.validate()?;
    if bare.predicate.is_none() {
        return Err(AlignError::MissingPredicate);
    }
    let mut elements = Vec::new();
    let mut candidates = Vec::new();
    for element in Element::ALL {
        let Some(text) = bare.element(element) else {
            continue;
        };
        let found = candidate_spans(tokens, text, cfg);
        if found.is_empty() {
            return Err(AlignError::NoCandidate(element));
        }
        elements.push(element);
        candidates.push(found);
    }
    Ok(Prepared {
        elements,
        candidates,
    })
}

fn build(
    tokens: &[String],
    bare: &BareQuintuple,
    elements: &[Element],
    choice: &[CandidateSpan],
) -> Quintuple {
    let mut spans: [Option<ElementSpan>; 4] = Default::default();
    for (element, c) in elements.iter().zip(choice) {
        spans[*element as usize] = Some(ElementSpan::from_window(tokens, c.start, c.length));
    }
    let [subject, object, aspect, predicate] = spans;
    Quintuple {
        subject,
        object,
        aspect,
        predicate: predicate.expect("predicate is always aligned"),
        label: bare.label,
    }
}

struct Search<'a> {
    candidates: &'a [Vec<CandidateSpan>],
    /// Best achievable score of elements `depth..`.
    score_ceiling: Vec<i64>,
    current: Vec<CandidateSpan>,
    best: Option<(SelectionKey, Vec<CandidateSpan>)>,
}

impl Search<'_> {
    fn run(&mut self, depth: usize, overlap: bool, score: i64, distance: u64) {
        if let Some((best, _)) = &self.best {
            // No completion can do better than this on any component.
            let bound = (overlap, -(score + self.score_ceiling[depth]), distance);
            if bound > (best.overlap, -best.score, best.distance) {
                return;
            }
        }
        if depth == self.candidates.len() {
            let key = SelectionKey::of(&self.current);
            let better = match &self.best {
                None => true,
                Some((best, _)) => key.cmp(best) == Ordering::Less,
            };
            if better {
                self.best = Some((key, self.current.clone()));
            }
            return;
        }
        for c in &self.candidates[depth] {
            let mut o = overlap;
            let mut d = distance;
            for prev in &self.current {
                o |= prev.overlaps(c);
                d += prev.center2().abs_diff(c.center2());
            }
            self.current.push(*c);
            self.run(depth + 1, o, score + score_units(c.score), d);
            self.current.pop();
        }
    }
}

/// Recovers token positions for a generated quintuple.
pub fn align_quintuple(
    tokens: &[String],
    bare: &BareQuintuple,
    cfg: &AlignmentConfig,
) -> Result<Quintuple, AlignError> {
    let prepared = prepare(tokens, bare, cfg)?;
    let mut score_ceiling = vec![0i64; prepared.candidates.len() + 1];
    for (i, list) in prepared.candidates.iter().enumerate().rev() {
        let top = list.iter().map(|c| score_units(c.score)).max().unwrap_or(0);
        score_ceiling[i] = score_ceiling[i + 1] + top;
    }
    let mut search = Search {
        candidates: &prepared.candidates,
        score_ceiling,
        current: Vec::with_capacity(prepared.candidates.len()),
        best: None,
    };
    search.run(0, false, 0, 0);
    let (_, choice) = search.best.expect("every element has a candidate");
    Ok(build(tokens, bare, &prepared.elements, &choice))
}

/// Exhaustive reference for [`align_quintuple`], without pruning. Only meant
/// for cross-checking on small inputs.
pub fn align_oracle(
    tokens: &[String],
    bare: &BareQuintuple,
    cfg: &AlignmentConfig,
) -> Result<Quintuple, AlignError> {
    let prepared = prepare(tokens, bare, cfg)?;
    let lists = &prepared.candidates;
    let mut odometer = vec![0usize; lists.len()];
    let mut best: Option<(SelectionKey, Vec<CandidateSpan>)> = None;
    loop {
        let choice: Vec<CandidateSpan> = odometer
            .iter()
            .zip(lists)
            .map(|(&i, list)| list[i])
            .collect();
        let key = SelectionKey::of(&choice);
        if best
            .as_ref()
            .is_none_or(|(b, _)| key.cmp(b) == Ordering::Less)
        {
            best = Some((key, choice));
        }
        let mut pos = 0;
        loop {
            if pos == odometer.len() {
                let (_, choice) = best.expect("at least one combination");
                return Ok(build(tokens, bare, &prepared.elements, &choice));
            }
            odometer[pos] += 1;
            if odometer[pos] < lists[pos].len() {
                break;
            }
            odometer[pos] = 0;
            pos += 1;
        }
    }
}
