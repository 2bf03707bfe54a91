//! Append-only JSONL log of reviewer verdicts.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ledgerscope::triage::Verdict;
use serde::{Deserialize, Serialize};

pub const LOG_FILE: &str = "verdicts.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub post_id: String,
    pub verdict: Verdict,
    pub reviewer: String,
    /// Unix seconds.
    pub timestamp: i64,
}

pub struct VerdictLog {
    path: PathBuf,
    file: File,
}

impl VerdictLog {
    /// Open (creating if needed) the log in `dir` and return it together
    /// with every complete record already in it.
    ///
    /// A trailing line without a newline can only come from a write that
    /// was interrupted before it was acknowledged; it is cut off so later
    /// appends start on a clean line.
    pub fn open(dir: &Path) -> io::Result<(Self, Vec<VerdictRecord>)> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            log::warn!("dropping {} bytes of unterminated verdict record", bytes.len() - complete);
            bytes.truncate(complete);
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(complete as u64)?;
            f.sync_all()?;
        }
        let mut records = Vec::new();
        for (i, line) in String::from_utf8_lossy(&bytes).lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(r) => records.push(r),
                Err(e) => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", path.display(), i + 1),
                    ))
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((Self { path, file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one record and flush it to stable storage.
    pub fn append(&mut self, record: &VerdictRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}
