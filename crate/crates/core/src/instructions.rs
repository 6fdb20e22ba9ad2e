//! Multi-task instruction dataset construction.
//!
//! Each of the ten sub-tasks asks for a subset of the five quintuple fields.
//! A sample pairs the sub-task's instruction with the review text and a
//! target in the delimited template restricted to that subset.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, Field, Quintuple};
use crate::templates::{delimited_group, GROUP_SEPARATOR, NONE_LITERAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SubTask {
    Soapl,
    Soap,
    Soal,
    Soa,
    Sol,
    Sop,
    Apl,
    So,
    Ap,
    Al,
}

impl SubTask {
    /// All sub-tasks in dataset order.
    pub const ALL: [SubTask; 10] = [
        SubTask::Soapl,
        SubTask::Soap,
        SubTask::Soal,
        SubTask::Soa,
        SubTask::Sol,
        SubTask::Sop,
        SubTask::Apl,
        SubTask::So,
        SubTask::Ap,
        SubTask::Al,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SubTask::Soapl => "SOAPL",
            SubTask::Soap => "SOAP",
            SubTask::Soal => "SOAL",
            SubTask::Soa => "SOA",
            SubTask::Sol => "SOL",
            SubTask::Sop => "SOP",
            SubTask::Apl => "APL",
            SubTask::So => "SO",
            SubTask::Ap => "AP",
            SubTask::Al => "AL",
        }
    }

    /// Requested fields in canonical order.
    pub fn fields(self) -> Vec<Field> {
        self.code()
            .chars()
            .map(|c| match c {
                'S' => Field::Subject,
                'O' => Field::Object,
                'A' => Field::Aspect,
                'P' => Field::Predicate,
                'L' => Field::Label,
                _ => unreachable!(),
            })
            .collect()
    }

    pub fn default_instruction(self) -> &'static str {
        match self {
            SubTask::Soapl => "Please extract five elements including subject, object, aspect, predicate, and comparison type in the sentence",
            SubTask::Soap => "Please extract four elements including subject, object, aspect, and predicate in the sentence",
            SubTask::Soal => "Please extract four elements including subject, object, aspect, and comparison type in the sentence",
            SubTask::Soa => "Please extract three elements including subject, object, and aspect in the sentence",
            SubTask::Sol => "Please extract three elements including subject, object, and comparison type in the sentence",
            SubTask::Sop => "Please extract three elements including subject, object, and predicate in the sentence",
            SubTask::Apl => "Please extract three elements including aspect, predicate, and comparison type in the sentence",
            SubTask::So => "Please extract two elements including subject and object in the sentence",
            SubTask::Ap => "Please extract two elements including aspect and predicate in the sentence",
            SubTask::Al => "Please extract two elements including aspect and comparison type in the sentence",
        }
    }
}

impl fmt::Display for SubTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SubTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        SubTask::ALL
            .into_iter()
            .find(|t| t.code() == upper)
            .ok_or_else(|| format!("unknown sub-task {s:?}"))
    }
}

/// Instruction strings keyed by sub-task. Missing entries fall back to the
/// English defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstructionTable {
    overrides: HashMap<SubTask, String>,
}

impl InstructionTable {
    pub fn with_overrides(overrides: HashMap<SubTask, String>) -> Self {
        InstructionTable { overrides }
    }

    pub fn get(&self, task: SubTask) -> &str {
        self.overrides
            .get(&task)
            .map(String::as_str)
            .unwrap_or_else(|| task.default_instruction())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub task: SubTask,
    pub instruction: String,
    pub input: String,
    pub target: String,
}

/// Field values of `quintuple` requested by `task`, absent spans as `None`.
pub fn project(quintuple: &Quintuple, task: SubTask) -> Vec<String> {
    task.fields()
        .into_iter()
        .map(|field| match field.element() {
            Some(e) => quintuple
                .element(e)
                .map(|s| s.text())
                .unwrap_or_else(|| NONE_LITERAL.to_string()),
            None => quintuple.label.to_string(),
        })
        .collect()
}

/// Target string of one record for one sub-task.
pub fn target(record: &CorpusRecord, task: SubTask) -> String {
    if record.quintuples.is_empty() {
        return NONE_LITERAL.to_string();
    }
    record
        .quintuples
        .iter()
        .map(|q| delimited_group(&project(q, task)))
        .collect::<Vec<_>>()
        .join(GROUP_SEPARATOR)
}

/// One sample per (record, sub-task), records outermost, sub-tasks in
/// [`SubTask::ALL`] order whatever the order of `tasks`.
pub fn build_dataset(
    corpus: &[CorpusRecord],
    tasks: &[SubTask],
    include_noncomparative: bool,
    table: &InstructionTable,
) -> Vec<InstructionSample> {
    let selected: Vec<SubTask> = SubTask::ALL
        .into_iter()
        .filter(|t| tasks.contains(t))
        .collect();
    corpus
        .iter()
        .filter(|r| include_noncomparative || r.is_comparative())
        .flat_map(|record| {
            selected.iter().map(move |&task| InstructionSample {
                id: format!("{}:{}", record.id, task),
                task,
                instruction: table.get(task).to_string(),
                input: record.text.clone(),
                target: target(record, task),
            })
        })
        .collect()
}
