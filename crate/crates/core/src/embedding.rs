//! Sidecar files of precomputed embedding vectors.
//!
//! ```text
//! dim=768
//! p1<TAB>0.013,-0.2,...
//! p2<TAB>...
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no embedding stored for post `{0}`")]
    MissingEmbedding(String),
    #[error("embedding has {found} values, expected {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("sidecar line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// All rows of one sidecar file, keyed by post id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, post_id: impl Into<String>, values: Vec<f64>) {
        self.rows.insert(post_id.into(), values);
    }

    /// Parse a sidecar. Row widths are checked on lookup, not here, so a
    /// single malformed row only fails the posts that need it.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| EmbeddingError::Io { path: String::new(), source: e })?,
            None => return Err(EmbeddingError::Format { line: 1, reason: "empty file".into() }),
        };
        let dim = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or_else(|| EmbeddingError::Format { line: 1, reason: format!("bad header `{header}`") })?;
        let mut table = Self::new(dim);
        for (idx, line) in lines {
            let line = line.map_err(|e| EmbeddingError::Io { path: String::new(), source: e })?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line.split_once('\t').ok_or_else(|| EmbeddingError::Format {
                line: idx + 1,
                reason: "expected post_id<TAB>values".into(),
            })?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::Format { line: idx + 1, reason: e.to_string() })?;
            table.rows.insert(id.to_string(), values);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let io = |e| EmbeddingError::Io { path: path.display().to_string(), source: e };
        let file = File::open(path).map_err(io)?;
        Self::read(BufReader::new(file))
    }

    /// Row for `post_id`, which must be exactly `expected` wide.
    pub fn get(&self, post_id: &str, expected: usize) -> Result<&[f64], EmbeddingError> {
        let row = self
            .rows
            .get(post_id)
            .ok_or_else(|| EmbeddingError::MissingEmbedding(post_id.to_string()))?;
        if row.len() != expected {
            return Err(EmbeddingError::Dimension { found: row.len(), expected });
        }
        Ok(row)
    }

    /// Write rows sorted by post id, floats in shortest round-trip form.
    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let io = |e| EmbeddingError::Io { path: path.display().to_string(), source: e };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "dim={}", self.dim).map_err(io)?;
        let mut ids: Vec<&String> = self.rows.keys().collect();
        ids.sort();
        for id in ids {
            let row = &self.rows[id];
            let joined = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            writeln!(out, "{id}\t{joined}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sidecar(dim: usize, rows: &[(&str, usize)]) -> String {
        let mut s = format!("dim={dim}\n");
        for (id, n) in rows {
            let vals: Vec<String> = (0..*n).map(|i| format!("{}", i as f64 * 0.5)).collect();
            s.push_str(&format!("{id}\t{}\n", vals.join(",")));
        }
        s
    }

    #[test]
    fn lookup_checks_width() {
        let t = EmbeddingTable::read(Cursor::new(sidecar(768, &[("p1", 768), ("p2", 512)]))).unwrap();
        assert_eq!(t.get("p1", 768).unwrap().len(), 768);
        assert!(matches!(t.get("p2", 768), Err(EmbeddingError::Dimension { found: 512, .. })));
        assert!(matches!(t.get("zz", 768), Err(EmbeddingError::MissingEmbedding(id)) if id == "zz"));
    }

    #[test]
    fn rejects_bad_header_and_rows() {
        assert!(matches!(
            EmbeddingTable::read(Cursor::new("dimension 3\n")),
            Err(EmbeddingError::Format { line: 1, .. })
        ));
        assert!(matches!(
            EmbeddingTable::read(Cursor::new("dim=2\np1 1,2\n")),
            Err(EmbeddingError::Format { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingTable::read(Cursor::new("dim=2\np1\t1,x\n")),
            Err(EmbeddingError::Format { line: 2, .. })
        ));
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        let mut t = EmbeddingTable::new(3);
        t.insert("b", vec![0.1, -2.5, 1e-12]);
        t.insert("a", vec![0.0, 1.0, 2.0]);
        t.save(&path).unwrap();
        assert_eq!(EmbeddingTable::load(&path).unwrap(), t);
    }
}
