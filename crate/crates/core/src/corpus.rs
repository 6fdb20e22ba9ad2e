//! Reviews, quintuples and the JSONL corpus format.
//!
//! One record per line:
//!
//! ```text
//! {"id":"r1","text":"...","quintuples":[{"subject":["1&&iPhone"],"object":[],
//!  "aspect":[],"predicate":["7&&better"],"label":"COM+"}]}
//! ```
//!
//! Token positions are 1-based over the whitespace tokenization of the
//! normalized text.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Separator between the position and the surface token of an indexed element.
pub const INDEX_SEPARATOR: &str = "&&";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("malformed index token {value:?} in {element}")]
    MalformedIndexToken { element: Element, value: String },
    #[error("{element} index {index} out of bounds for {len} tokens")]
    IndexOutOfBounds {
        element: Element,
        index: usize,
        len: usize,
    },
    #[error("{element} token mismatch at {index}: sentence has {expected:?}, span has {found:?}")]
    TokenMismatch {
        element: Element,
        index: usize,
        expected: String,
        found: String,
    },
    #[error("indices in {element} are not strictly increasing")]
    NonIncreasingIndices { element: Element },
    #[error("empty span for {element}")]
    EmptySpan { element: Element },
    #[error("unknown comparison label {0:?}")]
    UnknownLabel(String),
    #[error("quintuple has no predicate")]
    MissingPredicate,
    #[error("tokens do not match the normalized text")]
    StaleTokens,
}

/// Comparison type of a quintuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComparisonLabel {
    Eql,
    Dif,
    Com,
    ComPlus,
    ComMinus,
    Sup,
    SupPlus,
    SupMinus,
}

impl ComparisonLabel {
    pub const ALL: [ComparisonLabel; 8] = [
        ComparisonLabel::Eql,
        ComparisonLabel::Dif,
        ComparisonLabel::Com,
        ComparisonLabel::ComPlus,
        ComparisonLabel::ComMinus,
        ComparisonLabel::Sup,
        ComparisonLabel::SupPlus,
        ComparisonLabel::SupMinus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonLabel::Eql => "EQL",
            ComparisonLabel::Dif => "DIF",
            ComparisonLabel::Com => "COM",
            ComparisonLabel::ComPlus => "COM+",
            ComparisonLabel::ComMinus => "COM-",
            ComparisonLabel::Sup => "SUP",
            ComparisonLabel::SupPlus => "SUP+",
            ComparisonLabel::SupMinus => "SUP-",
        }
    }
}

impl fmt::Display for ComparisonLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComparisonLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComparisonLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

impl Serialize for ComparisonLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ComparisonLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The four span-valued elements of a quintuple, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Subject,
    Object,
    Aspect,
    Predicate,
}

impl Element {
    pub const ALL: [Element; 4] = [
        Element::Subject,
        Element::Object,
        Element::Aspect,
        Element::Predicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Element::Subject => "subject",
            Element::Object => "object",
            Element::Aspect => "aspect",
            Element::Predicate => "predicate",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All five quintuple fields: the four span elements plus the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Subject,
    Object,
    Aspect,
    Predicate,
    Label,
}

impl Field {
    pub const ALL: [Field; 5] = [
        Field::Subject,
        Field::Object,
        Field::Aspect,
        Field::Predicate,
        Field::Label,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Subject => "subject",
            Field::Object => "object",
            Field::Aspect => "aspect",
            Field::Predicate => "predicate",
            Field::Label => "label",
        }
    }

    pub fn element(self) -> Option<Element> {
        match self {
            Field::Subject => Some(Element::Subject),
            Field::Object => Some(Element::Object),
            Field::Aspect => Some(Element::Aspect),
            Field::Predicate => Some(Element::Predicate),
            Field::Label => None,
        }
    }
}

/// Ordered `(position, token)` pairs of one element. Positions are 1-based
/// and strictly increasing; the span is never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementSpan {
    items: Vec<(usize, String)>,
}

impl ElementSpan {
    pub fn new(items: Vec<(usize, String)>) -> Result<Self, CorpusError> {
        Self::with_element(items, Element::Predicate)
    }

    fn with_element(items: Vec<(usize, String)>, element: Element) -> Result<Self, CorpusError> {
        if items.is_empty() {
            return Err(CorpusError::EmptySpan { element });
        }
        for (index, token) in &items {
            if *index == 0 || token.is_empty() {
                return Err(CorpusError::MalformedIndexToken {
                    element,
                    value: format!("{index}{INDEX_SEPARATOR}{token}"),
                });
            }
        }
        if items.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(CorpusError::NonIncreasingIndices { element });
        }
        Ok(ElementSpan { items })
    }

    /// Contiguous span copied out of `tokens`, starting at 1-based `start`.
    pub fn from_window(tokens: &[String], start: usize, len: usize) -> Self {
        assert!(start >= 1 && len >= 1 && start + len - 1 <= tokens.len());
        let items = (start..start + len)
            .map(|i| (i, tokens[i - 1].clone()))
            .collect();
        ElementSpan { items }
    }

    pub fn items(&self) -> &[(usize, String)] {
        &self.items
    }

    pub fn start(&self) -> usize {
        self.items[0].0
    }

    pub fn end(&self) -> usize {
        self.items[self.items.len() - 1].0
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_contiguous(&self) -> bool {
        self.end() - self.start() + 1 == self.items.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(_, t)| t.as_str())
    }

    /// Surface text: tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens().collect::<Vec<_>>().join(" ")
    }

    pub fn overlaps(&self, other: &ElementSpan) -> bool {
        self.start() <= other.end() && other.start() <= self.end()
    }

    pub fn validate(&self, tokens: &[String], element: Element) -> Result<(), CorpusError> {
        for (index, token) in &self.items {
            let expected = tokens.get(index - 1).ok_or(CorpusError::IndexOutOfBounds {
                element,
                index: *index,
                len: tokens.len(),
            })?;
            if expected != token {
                return Err(CorpusError::TokenMismatch {
                    element,
                    index: *index,
                    expected: expected.clone(),
                    found: token.clone(),
                });
            }
        }
        Ok(())
    }

    fn encode(&self) -> Vec<String> {
        self.items
            .iter()
            .map(|(i, t)| format!("{i}{INDEX_SEPARATOR}{t}"))
            .collect()
    }

    fn decode(raw: &[String], element: Element) -> Result<Option<Self>, CorpusError> {
        if raw.is_empty() {
            return Ok(None);
        }
        let items = raw
            .iter()
            .map(|value| parse_index_token(value, element))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_element(items, element).map(Some)
    }
}

fn parse_index_token(value: &str, element: Element) -> Result<(usize, String), CorpusError> {
    let malformed = || CorpusError::MalformedIndexToken {
        element,
        value: value.to_string(),
    };
    let (index, token) = value.split_once(INDEX_SEPARATOR).ok_or_else(malformed)?;
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) || token.is_empty() {
        return Err(malformed());
    }
    let index: usize = index.parse().map_err(|_| malformed())?;
    if index == 0 {
        return Err(malformed());
    }
    Ok((index, token.to_string()))
}

/// An indexed comparative quintuple. Only the predicate is mandatory.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Quintuple {
    pub subject: Option<ElementSpan>,
    pub object: Option<ElementSpan>,
    pub aspect: Option<ElementSpan>,
    pub predicate: ElementSpan,
    pub label: ComparisonLabel,
}

impl Quintuple {
    pub fn element(&self, element: Element) -> Option<&ElementSpan> {
        match element {
            Element::Subject => self.subject.as_ref(),
            Element::Object => self.object.as_ref(),
            Element::Aspect => self.aspect.as_ref(),
            Element::Predicate => Some(&self.predicate),
        }
    }

    /// Present span elements in canonical order.
    pub fn spans(&self) -> impl Iterator<Item = (Element, &ElementSpan)> {
        Element::ALL
            .into_iter()
            .filter_map(move |e| self.element(e).map(|s| (e, s)))
    }

    /// Number of present span elements, 1 to 4.
    pub fn present_elements(&self) -> usize {
        self.spans().count()
    }

    pub fn validate(&self, tokens: &[String]) -> Result<(), CorpusError> {
        self.spans().try_for_each(|(e, s)| s.validate(tokens, e))
    }

    /// Drops the token positions, keeping surface texts and the label.
    pub fn to_bare(&self) -> BareQuintuple {
        BareQuintuple {
            subject: self.subject.as_ref().map(ElementSpan::text),
            object: self.object.as_ref().map(ElementSpan::text),
            aspect: self.aspect.as_ref().map(ElementSpan::text),
            predicate: Some(self.predicate.text()),
            label: self.label,
        }
    }
}

/// A quintuple as generated text, without token positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BareQuintuple {
    pub subject: Option<String>,
    pub object: Option<String>,
    pub aspect: Option<String>,
    pub predicate: Option<String>,
    pub label: ComparisonLabel,
}

impl BareQuintuple {
    pub fn element(&self, element: Element) -> Option<&str> {
        match element {
            Element::Subject => self.subject.as_deref(),
            Element::Object => self.object.as_deref(),
            Element::Aspect => self.aspect.as_deref(),
            Element::Predicate => self.predicate.as_deref(),
        }
    }

    pub fn element_mut(&mut self, element: Element) -> &mut Option<String> {
        match element {
            Element::Subject => &mut self.subject,
            Element::Object => &mut self.object,
            Element::Aspect => &mut self.aspect,
            Element::Predicate => &mut self.predicate,
        }
    }
}

/// One review with its tokenization and gold quintuples.
///
/// Fields are public for convenience; [`CorpusRecord::new`] and
/// [`parse_record`] always produce records that pass [`CorpusRecord::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub quintuples: Vec<Quintuple>,
}

impl CorpusRecord {
    /// Normalizes `raw_text`, tokenizes it and validates every quintuple.
    pub fn new(
        id: impl Into<String>,
        raw_text: &str,
        quintuples: Vec<Quintuple>,
    ) -> Result<Self, CorpusError> {
        let text = normalize_text(raw_text);
        let tokens = tokenize(&text);
        let record = CorpusRecord {
            id: id.into(),
            text,
            tokens,
            quintuples,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn is_comparative(&self) -> bool {
        !self.quintuples.is_empty()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text != normalize_text(&self.text) || self.tokens != tokenize(&self.text) {
            return Err(CorpusError::StaleTokens);
        }
        self.quintuples
            .iter()
            .try_for_each(|q| q.validate(&self.tokens))
    }

    /// Same review with a different set of quintuples.
    pub fn with_quintuples(&self, quintuples: Vec<Quintuple>) -> Self {
        CorpusRecord {
            id: self.id.clone(),
            text: self.text.clone(),
            tokens: self.tokens.clone(),
            quintuples,
        }
    }
}

/// Collapses every whitespace run to one space and trims both ends.
pub fn normalize_text(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits normalized text on single spaces.
pub fn tokenize(text: &str) -> Vec<String> {
    if text.is_empty() {
        return Vec::new();
    }
    text.split(' ').map(str::to_string).collect()
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    quintuples: Vec<RawQuintuple>,
}

#[derive(Serialize, Deserialize)]
struct RawQuintuple {
    #[serde(default, deserialize_with = "nullable_list")]
    subject: Vec<String>,
    #[serde(default, deserialize_with = "nullable_list")]
    object: Vec<String>,
    #[serde(default, deserialize_with = "nullable_list")]
    aspect: Vec<String>,
    #[serde(default, deserialize_with = "nullable_list")]
    predicate: Vec<String>,
    label: String,
}

fn nullable_list<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<String>, D::Error> {
    Ok(Option::<Vec<String>>::deserialize(deserializer)?.unwrap_or_default())
}

impl RawQuintuple {
    fn into_quintuple(self) -> Result<Quintuple, CorpusError> {
        let predicate = ElementSpan::decode(&self.predicate, Element::Predicate)?
            .ok_or(CorpusError::MissingPredicate)?;
        Ok(Quintuple {
            subject: ElementSpan::decode(&self.subject, Element::Subject)?,
            object: ElementSpan::decode(&self.object, Element::Object)?,
            aspect: ElementSpan::decode(&self.aspect, Element::Aspect)?,
            predicate,
            label: self.label.parse()?,
        })
    }

    fn from_quintuple(q: &Quintuple) -> Self {
        let encode = |s: &Option<ElementSpan>| s.as_ref().map(ElementSpan::encode).unwrap_or_default();
        RawQuintuple {
            subject: encode(&q.subject),
            object: encode(&q.object),
            aspect: encode(&q.aspect),
            predicate: q.predicate.encode(),
            label: q.label.to_string(),
        }
    }
}

/// Parses and validates one JSONL corpus line.
pub fn parse_record(json_line: &str) -> Result<CorpusRecord, CorpusError> {
    let raw: RawRecord =
        serde_json::from_str(json_line).map_err(|e| CorpusError::Json(e.to_string()))?;
    let quintuples = raw
        .quintuples
        .into_iter()
        .map(RawQuintuple::into_quintuple)
        .collect::<Result<Vec<_>, _>>()?;
    CorpusRecord::new(raw.id, &raw.text, quintuples)
}

/// Serializes a record as one canonical JSONL line (no trailing newline).
/// Absent elements are written as empty lists.
pub fn write_record(record: &CorpusRecord) -> String {
    let raw = RawRecord {
        id: record.id.clone(),
        text: record.text.clone(),
        quintuples: record
            .quintuples
            .iter()
            .map(RawQuintuple::from_quintuple)
            .collect(),
    };
    serde_json::to_string(&raw).expect("corpus records always serialize")
}
