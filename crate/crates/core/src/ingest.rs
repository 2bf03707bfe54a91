//! Corpus loading, cleaning and train/validation/test splitting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{is_tax_evasion_positive, AnnotatedPost};
use crate::record::{annotated_to_json_line, parse_annotated_line, RecordError};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: invalid label field `{field}`: {reason}")]
    Label { line: usize, field: String, reason: String },
    #[error("test size {test_size} must be in 1..{corpus_size}")]
    Size { test_size: usize, corpus_size: usize },
    #[error("validation fraction {0} must be in [0, 1)")]
    Fraction(f64),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Record(#[from] RecordError),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<AnnotatedPost>,
    pub provenance: String,
    pub seed: u64,
}

impl CorpusManifest {
    pub fn new(records: Vec<AnnotatedPost>, provenance: impl Into<String>, seed: u64) -> Self {
        Self { records, provenance: provenance.into(), seed }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| is_tax_evasion_positive(r)).count()
    }
}

/// Read a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn load_corpus(path: &Path) -> Result<CorpusManifest, IngestError> {
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let records = read_records(BufReader::new(file), path)?;
    Ok(CorpusManifest::new(records, path.display().to_string(), 0))
}

fn read_records<R: BufRead>(reader: R, path: &Path) -> Result<Vec<AnnotatedPost>, IngestError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_annotated_line(&line) {
            Ok(rec) => records.push(rec),
            Err(RecordError::Label(e)) => {
                return Err(IngestError::Label {
                    line: line_no,
                    field: e.field().to_string(),
                    reason: e.to_string(),
                })
            }
            Err(RecordError::Unlabeled) => {
                return Err(IngestError::Label {
                    line: line_no,
                    field: "labels".into(),
                    reason: "record has no labels".into(),
                })
            }
            Err(e) => return Err(IngestError::Parse { line: line_no, reason: e.to_string() }),
        }
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[AnnotatedPost]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", annotated_to_json_line(r)?).map_err(|e| IngestError::io(path, e))?;
    }
    out.flush().map_err(|e| IngestError::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub removed_unavailable: usize,
    /// Distinct posts that appeared more than once among the available ones.
    pub duplicated_posts: usize,
    /// Extra copies dropped; at least `duplicated_posts`.
    pub removed_copies: usize,
}

/// Drop unavailable posts, then drop repeated `post_id`s keeping the first.
pub fn clean_corpus(m: &CorpusManifest) -> (CorpusManifest, CleanReport) {
    let mut report = CleanReport::default();
    let mut seen = HashSet::new();
    let mut duplicated = HashSet::new();
    let mut kept = Vec::with_capacity(m.records.len());
    for r in &m.records {
        let id = r.post.post_id.as_str();
        if !r.labels.available {
            report.removed_unavailable += 1;
        } else if !seen.insert(id) {
            report.removed_copies += 1;
            duplicated.insert(id);
        } else {
            kept.push(r.clone());
        }
    }
    report.duplicated_posts = duplicated.len();
    (CorpusManifest::new(kept, m.provenance.clone(), m.seed), report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<AnnotatedPost>,
    pub validation: Vec<AnnotatedPost>,
    pub test: Vec<AnnotatedPost>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Size of the validation slice carved from the training pool.
pub fn validation_size(pool: usize, val_fraction: f64) -> usize {
    (val_fraction * pool as f64).round() as usize
}

fn check_split_args(n: usize, test_size: usize, val_fraction: f64) -> Result<(), IngestError> {
    if test_size == 0 || test_size >= n {
        return Err(IngestError::Size { test_size, corpus_size: n });
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(IngestError::Fraction(val_fraction));
    }
    Ok(())
}

fn gather(m: &CorpusManifest, mut idx: Vec<usize>) -> Vec<AnnotatedPost> {
    idx.sort_unstable();
    idx.into_iter().map(|i| m.records[i].clone()).collect()
}

/// Uniform random test set of `test_size`, then a validation set of
/// `round(val_fraction × remaining)`; the rest trains. Records keep their
/// corpus order inside each part.
pub fn split_corpus(
    m: &CorpusManifest,
    test_size: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, IngestError> {
    let n = m.len();
    check_split_args(n, test_size, val_fraction)?;
    let mut rng = SeededRng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_val = validation_size(n - test_size, val_fraction);
    let test = order[..test_size].to_vec();
    let val = order[test_size..test_size + n_val].to_vec();
    let train = order[test_size + n_val..].to_vec();
    Ok(DatasetSplit { train: gather(m, train), validation: gather(m, val), test: gather(m, test), seed })
}

/// As [`split_corpus`], but each part keeps the corpus class ratio as
/// closely as rounding allows.
pub fn split_corpus_stratified(
    m: &CorpusManifest,
    test_size: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, IngestError> {
    let n = m.len();
    check_split_args(n, test_size, val_fraction)?;
    let mut rng = SeededRng::new(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| is_tax_evasion_positive(&m.records[i]));
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let n_val = validation_size(n - test_size, val_fraction);
    let rate = pos.len() as f64 / n as f64;
    let test_pos = ((test_size as f64 * rate).round() as usize).min(pos.len()).min(test_size);
    let test_neg = test_size - test_pos;
    let val_pos = ((n_val as f64 * rate).round() as usize).min(pos.len() - test_pos).min(n_val);
    let val_neg = n_val - val_pos;
    if test_neg + val_neg > neg.len() {
        return Err(IngestError::Size { test_size, corpus_size: n });
    }
    let take = |v: &[usize], a: usize, b: usize| v[a..b].to_vec();
    let mut test = take(&pos, 0, test_pos);
    test.extend(take(&neg, 0, test_neg));
    let mut val = take(&pos, test_pos, test_pos + val_pos);
    val.extend(take(&neg, test_neg, test_neg + val_neg));
    let mut train = pos[test_pos + val_pos..].to_vec();
    train.extend_from_slice(&neg[test_neg + val_neg..]);
    Ok(DatasetSplit { train: gather(m, train), validation: gather(m, val), test: gather(m, test), seed })
}
