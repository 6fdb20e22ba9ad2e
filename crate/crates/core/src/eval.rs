//! Exact-match scoring over every combination of quintuple fields.
//!
//! A predicted quintuple matches a gold one under a combination when all the
//! selected fields are equal, token positions included. Matching within a
//! record is a multiset intersection of projected keys, so each gold
//! quintuple is consumed at most once.
//!
//! Micro scores sum TP/pred/gold counts over the corpus. Macro scores average
//! per-class precision, recall and F1 over the comparison labels that occur
//! in the gold or predicted quintuples; quintuples only match within the same
//! label class. All 0/0 ratios are 0.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{ComparisonLabel, CorpusRecord, Field, Quintuple};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction ids missing from the gold corpus: {0:?}")]
    UnmatchedIds(Vec<String>),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
}

/// A non-empty subset of the five quintuple fields, stored as a bit mask
/// in [`Field::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementCombination(u8);

impl ElementCombination {
    pub const FULL: ElementCombination = ElementCombination(0b11111);

    pub fn from_fields(fields: &[Field]) -> Option<Self> {
        let mask = fields
            .iter()
            .fold(0u8, |m, f| m | 1 << Field::ALL.iter().position(|x| x == f).unwrap());
        (mask != 0).then_some(ElementCombination(mask))
    }

    pub fn from_mask(mask: u8) -> Option<Self> {
        (1..=31).contains(&mask).then_some(ElementCombination(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    /// All 31 combinations, smaller subsets first.
    pub fn all() -> Vec<ElementCombination> {
        let mut v: Vec<_> = (1u8..=31).map(ElementCombination).collect();
        v.sort_by_key(|c| (c.0.count_ones(), c.fields().collect::<Vec<_>>()));
        v
    }

    pub fn contains(self, field: Field) -> bool {
        let bit = Field::ALL.iter().position(|f| *f == field).unwrap();
        self.0 & (1 << bit) != 0
    }

    pub fn is_subset_of(self, other: ElementCombination) -> bool {
        self.0 & other.0 == self.0
    }

    pub fn fields(self) -> impl Iterator<Item = Field> {
        Field::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    pub fn name(self) -> String {
        self.fields().map(Field::as_str).collect::<Vec<_>>().join("+")
    }
}

impl fmt::Display for ElementCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeyPart {
    Absent,
    Span(Vec<(usize, String)>),
    Label(ComparisonLabel),
}

/// Projection of a quintuple onto a combination; equal keys match.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatchKey(pub Vec<KeyPart>);

pub fn project_key(quintuple: &Quintuple, combination: ElementCombination) -> MatchKey {
    MatchKey(
        combination
            .fields()
            .map(|field| match field.element() {
                Some(e) => quintuple
                    .element(e)
                    .map_or(KeyPart::Absent, |s| KeyPart::Span(s.items().to_vec())),
                None => KeyPart::Label(quintuple.label),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub tp: usize,
    #[serde(rename = "pred")]
    pub n_pred: usize,
    #[serde(rename = "gold")]
    pub n_gold: usize,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            n_pred: self.n_pred + o.n_pred,
            n_gold: self.n_gold + o.n_gold,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

/// TP is the size of the multiset intersection of projected keys.
pub fn match_counts(
    predicted: &[Quintuple],
    gold: &[Quintuple],
    combination: ElementCombination,
) -> Counts {
    let mut available: HashMap<MatchKey, usize> = HashMap::new();
    for g in gold {
        *available.entry(project_key(g, combination)).or_default() += 1;
    }
    let mut tp = 0;
    for p in predicted {
        if let Some(n) = available.get_mut(&project_key(p, combination)) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    Counts {
        tp,
        n_pred: predicted.len(),
        n_gold: gold.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Prf {
    pub fn from_counts(c: Counts) -> Prf {
        let precision = ratio(c.tp as f64, c.n_pred as f64);
        let recall = ratio(c.tp as f64, c.n_gold as f64);
        Prf {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
        }
    }
}

/// Gold and predicted quintuples of one review.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordPair {
    pub id: String,
    pub predicted: Vec<Quintuple>,
    pub gold: Vec<Quintuple>,
}

/// Pairs predictions with gold records by id, in gold order. Gold records
/// without a prediction count as predicting nothing; predictions for unknown
/// ids are an error.
pub fn pair_records(
    gold: &[CorpusRecord],
    predicted: &[CorpusRecord],
) -> Result<Vec<RecordPair>, EvalError> {
    let mut by_id: HashMap<&str, &CorpusRecord> = HashMap::with_capacity(predicted.len());
    for p in predicted {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(EvalError::DuplicateId(p.id.clone()));
        }
    }
    let mut seen = HashSet::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(EvalError::DuplicateId(g.id.clone()));
        }
    }
    let mut unmatched: Vec<String> = predicted
        .iter()
        .filter(|p| !seen.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !unmatched.is_empty() {
        unmatched.sort();
        return Err(EvalError::UnmatchedIds(unmatched));
    }
    Ok(gold
        .iter()
        .map(|g| RecordPair {
            id: g.id.clone(),
            predicted: by_id
                .get(g.id.as_str())
                .map(|p| p.quintuples.clone())
                .unwrap_or_default(),
            gold: g.quintuples.clone(),
        })
        .collect())
}

pub fn micro_counts(pairs: &[RecordPair], combination: ElementCombination) -> Counts {
    pairs
        .iter()
        .map(|p| match_counts(&p.predicted, &p.gold, combination))
        .fold(Counts::default(), Add::add)
}

pub fn micro_scores(pairs: &[RecordPair], combination: ElementCombination) -> Prf {
    Prf::from_counts(micro_counts(pairs, combination))
}

/// Per-label counts: predictions of class `c` against gold of class `c`.
pub fn label_counts(
    pairs: &[RecordPair],
    combination: ElementCombination,
) -> BTreeMap<ComparisonLabel, Counts> {
    let mut out: BTreeMap<ComparisonLabel, Counts> = BTreeMap::new();
    for pair in pairs {
        for label in ComparisonLabel::ALL {
            let pred: Vec<Quintuple> = pair
                .predicted
                .iter()
                .filter(|q| q.label == label)
                .cloned()
                .collect();
            let gold: Vec<Quintuple> = pair
                .gold
                .iter()
                .filter(|q| q.label == label)
                .cloned()
                .collect();
            if pred.is_empty() && gold.is_empty() {
                continue;
            }
            *out.entry(label).or_default() += match_counts(&pred, &gold, combination);
        }
    }
    out
}

fn macro_from_label_counts(per_label: &BTreeMap<ComparisonLabel, Counts>) -> Prf {
    let classes: Vec<Prf> = per_label
        .values()
        .filter(|c| c.n_pred + c.n_gold > 0)
        .map(|c| Prf::from_counts(*c))
        .collect();
    if classes.is_empty() {
        return Prf::default();
    }
    let n = classes.len() as f64;
    Prf {
        precision: classes.iter().map(|c| c.precision).sum::<f64>() / n,
        recall: classes.iter().map(|c| c.recall).sum::<f64>() / n,
        f1: classes.iter().map(|c| c.f1).sum::<f64>() / n,
    }
}

pub fn macro_scores(pairs: &[RecordPair], combination: ElementCombination) -> Prf {
    macro_from_label_counts(&label_counts(pairs, combination))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationScores {
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationCounts {
    #[serde(flatten)]
    pub total: Counts,
    #[serde(serialize_with = "label_map")]
    pub per_label: BTreeMap<ComparisonLabel, Counts>,
}

fn label_map<S: Serializer>(
    map: &BTreeMap<ComparisonLabel, Counts>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    let mut m = serializer.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        m.serialize_entry(k.as_str(), v)?;
    }
    m.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Headline {
    pub combination: String,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Map serialized in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordered<T>(pub Vec<(String, T)>);

impl<T: Serialize> Serialize for Ordered<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut m = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<T> Ordered<T> {
    pub fn get(&self, key: &str) -> Option<&T> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

/// The full metric grid: micro and macro P/R/F1 for all 31 combinations.
/// The ranking headline is the macro F1 of the full quintuple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub combinations: Ordered<CombinationScores>,
    pub headline: Headline,
    pub counts: Ordered<CombinationCounts>,
}

impl EvalReport {
    pub fn scores(&self, combination: ElementCombination) -> &CombinationScores {
        self.combinations
            .get(&combination.name())
            .expect("report covers all combinations")
    }

    pub fn counts(&self, combination: ElementCombination) -> &CombinationCounts {
        self.counts
            .get(&combination.name())
            .expect("report covers all combinations")
    }
}

pub fn full_grid(pairs: &[RecordPair]) -> EvalReport {
    let mut combinations = Vec::with_capacity(31);
    let mut counts = Vec::with_capacity(31);
    for c in ElementCombination::all() {
        let total = micro_counts(pairs, c);
        let per_label = label_counts(pairs, c);
        combinations.push((
            c.name(),
            CombinationScores {
                micro: Prf::from_counts(total),
                macro_avg: macro_from_label_counts(&per_label),
            },
        ));
        counts.push((c.name(), CombinationCounts { total, per_label }));
    }
    let combinations = Ordered(combinations);
    let full = combinations
        .get(&ElementCombination::FULL.name())
        .expect("full combination present");
    let headline = Headline {
        combination: ElementCombination::FULL.name(),
        macro_f1: full.macro_avg.f1,
        micro_f1: full.micro.f1,
    };
    EvalReport {
        combinations,
        headline,
        counts: Ordered(counts),
    }
}
