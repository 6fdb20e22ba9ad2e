//! JSONL readers and writers for corpora, prediction files and embedding
//! vector files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_record, write_record, CorpusError, CorpusRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        source: CorpusError,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: duplicate id {id:?}")]
    DuplicateId { path: PathBuf, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Fail on the first invalid record.
    #[default]
    Strict,
    /// Skip invalid records and report them.
    Lenient,
}

/// A record that failed to load, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub error: CorpusError,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<CorpusRecord>,
    pub errors: Vec<LineError>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    Ok(lines)
}

/// Parses every non-blank line of a corpus file. Blank lines are skipped.
pub fn load_corpus_lines(lines: &[(usize, String)]) -> LoadedCorpus {
    let parsed: Vec<_> = lines
        .par_iter()
        .map(|(n, line)| (*n, parse_record(line)))
        .collect();
    let mut out = LoadedCorpus::default();
    for (line, result) in parsed {
        match result {
            Ok(r) => out.records.push(r),
            Err(error) => out.errors.push(LineError { line, error }),
        }
    }
    out
}

pub fn load_corpus(path: &Path, mode: LoadMode) -> Result<LoadedCorpus, IoError> {
    let loaded = load_corpus_lines(&read_lines(path)?);
    if mode == LoadMode::Strict {
        if let Some(first) = loaded.errors.first() {
            return Err(IoError::Record {
                path: path.to_path_buf(),
                line: first.line,
                source: first.error.clone(),
            });
        }
    }
    Ok(loaded)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<(), IoError> {
    write_lines(path, records.iter().map(write_record))
}

pub fn write_lines<I>(path: &Path, lines: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = String>,
{
    let wrap = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    for line in lines {
        out.write_all(line.as_bytes()).map_err(wrap)?;
        out.write_all(b"\n").map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    write_lines(
        path,
        rows.iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize")),
    )
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

/// One line of a generation prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub id: String,
    pub output: String,
}

/// One line of an embedding vector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRow {
    pub id: String,
    pub vector: Vec<f64>,
}

pub fn load_vectors(path: &Path) -> Result<HashMap<String, Vec<f64>>, IoError> {
    let rows: Vec<VectorRow> = read_jsonl(path)?;
    let mut map = HashMap::with_capacity(rows.len());
    for row in rows {
        if map.insert(row.id.clone(), row.vector).is_some() {
            return Err(IoError::DuplicateId {
                path: path.to_path_buf(),
                id: row.id,
            });
        }
    }
    Ok(map)
}

pub fn load_generations(path: &Path) -> Result<Vec<GenerationRow>, IoError> {
    read_jsonl(path)
}
