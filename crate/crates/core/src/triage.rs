//! Ranked review queue and the auditor-efficiency arithmetic.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MediaContent, PostRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStatus {
    Pending,
    ConfirmedEvasion,
    Rejected,
}

/// The two outcomes a reviewer can record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    ConfirmedEvasion,
    Rejected,
}

impl From<Verdict> for ReviewStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::ConfirmedEvasion => ReviewStatus::ConfirmedEvasion,
            Verdict::Rejected => ReviewStatus::Rejected,
        }
    }
}

/// What a reviewer sees of the post before opening it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub hashtags: Vec<String>,
    pub first_comment: Option<String>,
    pub image_ref: Option<String>,
}

impl Snippet {
    pub fn of(post: &PostRecord) -> Self {
        let image_ref = match &post.media {
            MediaContent::Image { path, .. } => path.clone(),
            MediaContent::VideoPlaceholder { seed } => Some(format!("video:{seed}")),
            MediaContent::PrecomputedEmbedding { .. } => None,
        };
        Self { hashtags: post.hashtags.clone(), first_comment: post.comments.first().cloned(), image_ref }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub post_id: String,
    pub score: f64,
    /// Score at or above the model threshold. Sub-threshold posts stay in
    /// the queue so borderline cases can still be audited.
    #[serde(default)]
    pub flagged: bool,
    pub status: ReviewStatus,
    #[serde(default)]
    pub reviewer: Option<String>,
    /// Unix seconds of the last verdict.
    #[serde(default)]
    pub reviewed_at: Option<i64>,
    #[serde(default)]
    pub snippet: Snippet,
}

impl QueueEntry {
    pub fn pending(post_id: impl Into<String>, score: f64) -> Self {
        Self {
            post_id: post_id.into(),
            score,
            flagged: false,
            status: ReviewStatus::Pending,
            reviewer: None,
            reviewed_at: None,
            snippet: Snippet::default(),
        }
    }
}

/// Score descending, then post id ascending.
pub fn queue_order(a: &QueueEntry, b: &QueueEntry) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.post_id.cmp(&b.post_id))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriageQueue {
    entries: Vec<QueueEntry>,
}

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("post {0} is not in the queue")]
    UnknownPost(String),
    #[error("post {post_id} already reviewed as {status:?}")]
    AlreadyReviewed { post_id: String, status: ReviewStatus },
    #[error("queue line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl TriageQueue {
    /// Sort arbitrary entries into queue order.
    pub fn from_entries(mut entries: Vec<QueueEntry>) -> Self {
        entries.sort_by(queue_order);
        Self { entries }
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&QueueEntry> {
        self.entries.iter().find(|e| e.post_id == post_id)
    }

    /// Entries `page * size .. (page + 1) * size`; `None` past the end.
    /// Page 0 of an empty queue is an empty page.
    pub fn page(&self, page: usize, size: usize) -> Option<&[QueueEntry]> {
        let start = page.checked_mul(size)?;
        if start == 0 && self.entries.is_empty() {
            return Some(&[]);
        }
        if size == 0 || start >= self.entries.len() {
            return None;
        }
        Some(&self.entries[start..(start + size).min(self.entries.len())])
    }

    /// Record a reviewer's verdict. Changing an already reviewed entry
    /// needs `force`.
    pub fn apply_verdict(
        &mut self,
        post_id: &str,
        verdict: Verdict,
        reviewer: &str,
        at: i64,
        force: bool,
    ) -> Result<&QueueEntry, TriageError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.post_id == post_id)
            .ok_or_else(|| TriageError::UnknownPost(post_id.to_string()))?;
        if entry.status != ReviewStatus::Pending && !force {
            return Err(TriageError::AlreadyReviewed { post_id: post_id.to_string(), status: entry.status });
        }
        entry.status = verdict.into();
        entry.reviewer = Some(reviewer.to_string());
        entry.reviewed_at = Some(at);
        Ok(entry)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("queue entries serialize") + "\n")
            .collect()
    }

    /// Parse JSONL entries; blank lines are skipped and the result is
    /// re-sorted into queue order.
    pub fn read(reader: impl BufRead) -> Result<Self, TriageError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TriageError::Parse { line: i + 1, reason: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| TriageError::Parse { line: i + 1, reason: e.to_string() })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self, TriageError> {
        let file = fs::File::open(path).map_err(|e| TriageError::Io { path: path.display().to_string(), source: e })?;
        Self::read(BufReader::new(file))
    }

    pub fn save(&self, path: &Path) -> Result<(), TriageError> {
        let io = |e| TriageError::Io { path: path.display().to_string(), source: e };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }
}

/// Build a fresh all-Pending queue from `(post_id, score)` pairs.
pub fn rank_queue<S: Into<String>>(scored: impl IntoIterator<Item = (S, f64)>) -> TriageQueue {
    TriageQueue::from_entries(scored.into_iter().map(|(id, s)| QueueEntry::pending(id, s)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    /// Hits expected when reviewing `budget` posts drawn at random.
    pub expected_random: f64,
    /// Hits expected when reviewing the top `budget` ranked posts.
    pub expected_ranked: f64,
    pub gain: f64,
}

/// Compare reviewing the ranked head of the queue against random review.
///
/// Assumes the classifier's precision holds uniformly over the first
/// `budget` ranked posts; measured precision at k usually drifts with k.
pub fn efficiency_report(precision: f64, base_rate: f64, budget: u64) -> EfficiencyReport {
    debug_assert!(base_rate > 0.0 && base_rate <= 1.0);
    debug_assert!((0.0..=1.0).contains(&precision));
    let b = budget as f64;
    EfficiencyReport { expected_random: base_rate * b, expected_ranked: precision * b, gain: precision / base_rate }
}
