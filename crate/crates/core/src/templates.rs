//! Generation templates for quintuples and a tolerant parser for model output.
//!
//! Two target formats are supported:
//!
//! * [`TemplateKind::Tagged`]:
//!   `[s] SUB [/s] [o] OBJ [/o] [a] ASP [/a] [p] PRED [/p] [l] LABEL [/l]`
//! * [`TemplateKind::Delimited`]: `{SUB; OBJ; ASP; PRED; LABEL}`
//!
//! Absent elements render as `None` and several quintuples are joined with
//! `"; "`. Positions are never rendered; see [`crate::align`] for their
//! recovery.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{BareQuintuple, ComparisonLabel, Element, Quintuple};

pub const NONE_LITERAL: &str = "None";
pub const GROUP_SEPARATOR: &str = "; ";
const FIELD_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Tagged,
    #[default]
    Delimited,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateKind::Tagged => "tagged",
            TemplateKind::Delimited => "delimited",
        })
    }
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tagged" | "template1" | "1" => Ok(TemplateKind::Tagged),
            "delimited" | "template2" | "2" => Ok(TemplateKind::Delimited),
            other => Err(format!("unknown template kind {other:?}")),
        }
    }
}

/// A recoverable problem found while parsing generated text. `group` is the
/// 0-based index of the offending quintuple group in the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseIssue {
    WrongFieldCount { group: usize, found: usize },
    UnknownLabel { group: usize, value: String },
    MissingPredicate { group: usize },
    UnbalancedBraces { offset: usize },
    UnbalancedTags { group: usize },
    StrayText { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParseOutcome {
    pub quintuples: Vec<BareQuintuple>,
    pub issues: Vec<ParseIssue>,
}

const TAGS: [(&str, &str); 5] = [
    ("[s]", "[/s]"),
    ("[o]", "[/o]"),
    ("[a]", "[/a]"),
    ("[p]", "[/p]"),
    ("[l]", "[/l]"),
];

fn field_text(value: Option<&str>) -> &str {
    value.unwrap_or(NONE_LITERAL)
}

fn bare_fields(q: &BareQuintuple) -> [String; FIELD_COUNT] {
    [
        field_text(q.subject.as_deref()).to_string(),
        field_text(q.object.as_deref()).to_string(),
        field_text(q.aspect.as_deref()).to_string(),
        field_text(q.predicate.as_deref()).to_string(),
        q.label.to_string(),
    ]
}

/// One delimited group: `{a; b; c}`.
pub fn delimited_group<S: AsRef<str>>(fields: &[S]) -> String {
    let inner: Vec<&str> = fields.iter().map(AsRef::as_ref).collect();
    format!("{{{}}}", inner.join("; "))
}

fn tagged_group(fields: &[String; FIELD_COUNT]) -> String {
    TAGS.iter()
        .zip(fields)
        .map(|((open, close), value)| format!("{open} {value} {close}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders bare quintuples in the requested template.
pub fn render(quintuples: &[BareQuintuple], kind: TemplateKind) -> String {
    quintuples
        .iter()
        .map(|q| {
            let fields = bare_fields(q);
            match kind {
                TemplateKind::Delimited => delimited_group(&fields),
                TemplateKind::Tagged => tagged_group(&fields),
            }
        })
        .collect::<Vec<_>>()
        .join(GROUP_SEPARATOR)
}

/// Renders indexed quintuples; positions are dropped.
pub fn render_indexed(quintuples: &[Quintuple], kind: TemplateKind) -> String {
    let bare: Vec<_> = quintuples.iter().map(Quintuple::to_bare).collect();
    render(&bare, kind)
}

fn is_separator_noise(text: &str) -> bool {
    text.chars().all(|c| c.is_whitespace() || c == ';')
}

fn is_none_output(text: &str) -> bool {
    let t = text.trim();
    t.is_empty() || t.eq_ignore_ascii_case(NONE_LITERAL)
}

fn optional_field(raw: &str) -> Option<String> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case(NONE_LITERAL) {
        None
    } else {
        Some(t.to_string())
    }
}

/// Builds a quintuple from five raw field strings, or reports why it can't.
fn assemble(group: usize, fields: [&str; FIELD_COUNT]) -> Result<BareQuintuple, ParseIssue> {
    let label_raw = fields[4].trim();
    let label = label_raw
        .parse::<ComparisonLabel>()
        .map_err(|_| ParseIssue::UnknownLabel {
            group,
            value: label_raw.to_string(),
        })?;
    let mut q = BareQuintuple {
        subject: None,
        object: None,
        aspect: None,
        predicate: None,
        label,
    };
    for (element, raw) in Element::ALL.into_iter().zip(fields) {
        *q.element_mut(element) = optional_field(raw);
    }
    if q.predicate.is_none() {
        return Err(ParseIssue::MissingPredicate { group });
    }
    Ok(q)
}

/// Splits one delimited group body into five fields. Surplus separators are
/// attributed to the first field, so the last four `;` are the boundaries.
fn split_delimited_fields(body: &str) -> Option<[&str; FIELD_COUNT]> {
    let cuts: Vec<usize> = body.match_indices(';').map(|(i, _)| i).collect();
    if cuts.len() < FIELD_COUNT - 1 {
        return None;
    }
    let c = &cuts[cuts.len() - 4..];
    Some([
        &body[..c[0]],
        &body[c[0] + 1..c[1]],
        &body[c[1] + 1..c[2]],
        &body[c[2] + 1..c[3]],
        &body[c[3] + 1..],
    ])
}

fn parse_delimited(output: &str) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    let mut bodies: Vec<&str> = Vec::new();

    if !output.contains('{') && !output.contains('}') {
        let t = output.trim();
        if !is_none_output(t) {
            // Brace-less output: one group, optionally in parentheses.
            let t = t
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .unwrap_or(t);
            bodies.push(t);
        }
    } else {
        let mut depth = 0usize;
        let mut group_start = 0usize;
        let mut outside_start = 0usize;
        for (i, c) in output.char_indices() {
            match c {
                '{' => {
                    if depth == 0 {
                        let outside = &output[outside_start..i];
                        if !is_separator_noise(outside) {
                            out.issues.push(ParseIssue::StrayText {
                                text: outside.trim().to_string(),
                            });
                        }
                        group_start = i + 1;
                    }
                    depth += 1;
                }
                '}' => match depth {
                    0 => {
                        out.issues.push(ParseIssue::UnbalancedBraces { offset: i });
                        outside_start = i + 1;
                    }
                    1 => {
                        depth = 0;
                        bodies.push(&output[group_start..i]);
                        outside_start = i + 1;
                    }
                    _ => depth -= 1,
                },
                _ => {}
            }
        }
        if depth > 0 {
            out.issues.push(ParseIssue::UnbalancedBraces {
                offset: group_start - 1,
            });
        } else {
            let tail = &output[outside_start..];
            if !is_separator_noise(tail) {
                out.issues.push(ParseIssue::StrayText {
                    text: tail.trim().to_string(),
                });
            }
        }
    }

    for (group, body) in bodies.into_iter().enumerate() {
        let Some(fields) = split_delimited_fields(body) else {
            out.issues.push(ParseIssue::WrongFieldCount {
                group,
                found: body.matches(';').count() + 1,
            });
            continue;
        };
        match assemble(group, fields) {
            Ok(q) => out.quintuples.push(q),
            Err(issue) => out.issues.push(issue),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece<'a> {
    Open(usize),
    Close(usize),
    Text(&'a str),
}

fn lex_tagged(output: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    let bytes = output.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'[' {
            let rest = &output[i..];
            let hit = TAGS.iter().enumerate().find_map(|(k, (open, close))| {
                if rest.starts_with(open) {
                    Some((Piece::Open(k), open.len()))
                } else if rest.starts_with(close) {
                    Some((Piece::Close(k), close.len()))
                } else {
                    None
                }
            });
            if let Some((piece, len)) = hit {
                if text_start < i {
                    pieces.push(Piece::Text(&output[text_start..i]));
                }
                pieces.push(piece);
                i += len;
                text_start = i;
                continue;
            }
        }
        i += 1;
    }
    if text_start < output.len() {
        pieces.push(Piece::Text(&output[text_start..]));
    }
    pieces
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagState {
    /// Between groups.
    Outside,
    /// Waiting for the opening tag of element `k`.
    Open(usize),
    /// Inside element `k`, before any text.
    Text(usize),
    /// Text of element `k` read, waiting for its closing tag.
    Close(usize),
}

fn parse_tagged(output: &str) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    if is_none_output(output) {
        return out;
    }

    let mut group = 0usize;
    let mut state = TagState::Outside;
    let mut fields: [&str; FIELD_COUNT] = [""; FIELD_COUNT];
    // Set after a broken group so that its leftovers are not reported twice.
    let mut skipping = false;

    for piece in lex_tagged(output) {
        let next = match (state, piece) {
            (TagState::Outside, Piece::Open(0)) => {
                fields = [""; FIELD_COUNT];
                skipping = false;
                Some(TagState::Text(0))
            }
            (TagState::Outside, Piece::Text(t)) => {
                if !skipping && !is_separator_noise(t) {
                    out.issues.push(ParseIssue::StrayText {
                        text: t.trim().to_string(),
                    });
                }
                Some(TagState::Outside)
            }
            (TagState::Outside, _) if skipping => Some(TagState::Outside),
            (TagState::Open(k), Piece::Open(j)) if j == k => Some(TagState::Text(k)),
            (TagState::Open(k), Piece::Text(t)) if is_separator_noise(t) => {
                Some(TagState::Open(k))
            }
            (TagState::Text(k), Piece::Text(t)) => {
                fields[k] = t;
                Some(TagState::Close(k))
            }
            (TagState::Text(k) | TagState::Close(k), Piece::Close(j)) if j == k => {
                if k + 1 == FIELD_COUNT {
                    finish_tagged(&mut out, group, fields);
                    group += 1;
                    Some(TagState::Outside)
                } else {
                    Some(TagState::Open(k + 1))
                }
            }
            _ => None,
        };
        state = match next {
            Some(s) => s,
            None => {
                out.issues.push(ParseIssue::UnbalancedTags { group });
                group += 1;
                if piece == Piece::Open(0) {
                    fields = [""; FIELD_COUNT];
                    skipping = false;
                    TagState::Text(0)
                } else {
                    skipping = true;
                    TagState::Outside
                }
            }
        };
    }
    if state != TagState::Outside {
        out.issues.push(ParseIssue::UnbalancedTags { group });
    }
    out
}

fn finish_tagged(out: &mut ParseOutcome, group: usize, fields: [&str; FIELD_COUNT]) {
    match assemble(group, fields) {
        Ok(q) => out.quintuples.push(q),
        Err(issue) => out.issues.push(issue),
    }
}

/// Parses model output into bare quintuples. Never fails: malformed groups
/// are skipped and reported as issues.
pub fn parse_generation(output: &str, kind: TemplateKind) -> ParseOutcome {
    match kind {
        TemplateKind::Delimited => parse_delimited(output),
        TemplateKind::Tagged => parse_tagged(output),
    }
}
