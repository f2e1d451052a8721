//! Per-example score tables and the rankings they induce.
//!
//! Every method follows the same convention: lower score means more
//! suspicious, so the ranking is ascending by score with ties broken by
//! ascending id. Rank 1 is the most suspicious example.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub method: String,
    pub entries: Vec<ScoreEntry>,
}

/// Ids sorted by ascending score, ties by ascending id.
pub fn rank_ascending(entries: &[ScoreEntry]) -> Vec<u64> {
    let mut sorted: Vec<&ScoreEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)));
    sorted.into_iter().map(|e| e.id).collect()
}

impl ScoreTable {
    pub fn new(method: impl Into<String>, entries: Vec<ScoreEntry>) -> Self {
        ScoreTable {
            method: method.into(),
            entries,
        }
    }

    pub fn from_pairs(method: impl Into<String>, ids: &[u64], scores: &[f64]) -> Self {
        let entries = ids
            .iter()
            .zip(scores)
            .map(|(&id, &score)| ScoreEntry { id, score })
            .collect();
        Self::new(method, entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most suspicious first.
    pub fn ranking(&self) -> Vec<u64> {
        rank_ascending(&self.entries)
    }

    pub fn score_map(&self) -> HashMap<u64, f64> {
        self.entries.iter().map(|e| (e.id, e.score)).collect()
    }

    /// Entries in ranked order.
    pub fn ranked_entries(&self) -> Vec<ScoreEntry> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)));
        sorted
    }

    /// Write `id,method,score,rank` rows, each table in ranked order.
    pub fn write_csv<W: Write>(tables: &[ScoreTable], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "method", "score", "rank"])?;
        for t in tables {
            for (rank, e) in t.ranked_entries().iter().enumerate() {
                w.write_record([
                    e.id.to_string(),
                    t.method.clone(),
                    format!("{:?}", e.score),
                    (rank + 1).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read tables back, one per method, in order of first appearance.
    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<ScoreTable>> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "method", "score", "rank"] {
            return Err(Error::format("score table header must be `id,method,score,rank`"));
        }
        let mut tables: Vec<ScoreTable> = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let id: u64 = row[0]
                .parse()
                .map_err(|e| Error::format(format!("score table id: {e}")))?;
            let score: f64 = row[2]
                .parse()
                .map_err(|e| Error::format(format!("score table score: {e}")))?;
            let method = &row[1];
            let entry = ScoreEntry { id, score };
            match tables.iter_mut().find(|t| t.method == method) {
                Some(t) => t.entries.push(entry),
                None => tables.push(ScoreTable::new(method, vec![entry])),
            }
        }
        Ok(tables)
    }
}
