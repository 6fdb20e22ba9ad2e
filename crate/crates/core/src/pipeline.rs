//! Two-stage prediction: stage 1 gates each review as comparative or not,
//! stage 2 parses the generated output of comparative reviews and aligns it
//! back onto the review's tokens.

use std::collections::HashMap;

use serde::Serialize;

use crate::align::{align_quintuple, AlignmentConfig};
use crate::corpus::CorpusRecord;
use crate::templates::{parse_generation, ParseIssue, TemplateKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordIssue {
    Parse { id: String, issue: ParseIssue },
    Align { id: String, group: usize, error: String },
    MissingOutput { id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Result {
    pub record: CorpusRecord,
    pub issues: Vec<RecordIssue>,
}

/// Parses one generated output and aligns every parsed quintuple against
/// `record`'s tokens. Unparseable groups and unalignable quintuples are
/// dropped and reported.
pub fn extract(
    record: &CorpusRecord,
    output: &str,
    kind: TemplateKind,
    align_cfg: &AlignmentConfig,
) -> Stage2Result {
    let parsed = parse_generation(output, kind);
    let mut issues: Vec<RecordIssue> = parsed
        .issues
        .into_iter()
        .map(|issue| RecordIssue::Parse {
            id: record.id.clone(),
            issue,
        })
        .collect();
    let mut quintuples = Vec::with_capacity(parsed.quintuples.len());
    for (group, bare) in parsed.quintuples.iter().enumerate() {
        match align_quintuple(&record.tokens, bare, align_cfg) {
            Ok(q) => quintuples.push(q),
            Err(e) => issues.push(RecordIssue::Align {
                id: record.id.clone(),
                group,
                error: e.to_string(),
            }),
        }
    }
    Stage2Result {
        record: record.with_quintuples(quintuples),
        issues,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    /// One prediction per input record, in input order.
    pub predictions: Vec<CorpusRecord>,
    pub issues: Vec<RecordIssue>,
}

/// Runs stage 2 on the records that `comparative` marks true; all other
/// records get no quintuples. `comparative` is aligned with `records`.
pub fn run_pipeline(
    records: &[CorpusRecord],
    comparative: &[bool],
    generations: &HashMap<String, String>,
    kind: TemplateKind,
    align_cfg: &AlignmentConfig,
) -> PipelineOutput {
    assert_eq!(records.len(), comparative.len());
    let mut out = PipelineOutput::default();
    for (record, &is_comparative) in records.iter().zip(comparative) {
        if !is_comparative {
            out.predictions.push(record.with_quintuples(Vec::new()));
            continue;
        }
        match generations.get(&record.id) {
            Some(output) => {
                let r = extract(record, output, kind, align_cfg);
                out.predictions.push(r.record);
                out.issues.extend(r.issues);
            }
            None => {
                out.predictions.push(record.with_quintuples(Vec::new()));
                out.issues.push(RecordIssue::MissingOutput {
                    id: record.id.clone(),
                });
            }
        }
    }
    out
}
