//! Corpus-scale analysis: metadata manifests, resumable scanning, and the
//! year/genre/developer/top-k reports.

mod aggregate;
mod report;
mod scan;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::AnalysisRecord;

pub use aggregate::{
    aggregate_by_genre, aggregate_by_year, bucket_for, developer_buckets, rank_top_k, topk_label,
    BucketCount, DeveloperBucket, DeveloperDetail, DeveloperReport, GroupStats, SingleAppSummary,
    TopKRow,
};
pub use report::{build_report, emit_report, read_report_json, CorpusReport, REPORT_FILES};
pub use scan::{read_record_log, scan_corpus, ScanOptions, ScanOutcome, RECORD_LOG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppMetadata {
    pub app_id: String,
    pub genre: String,
    pub developer: String,
    pub downloads: u64,
    pub avg_rating: f64,
    pub rating_count: u64,
    pub last_update_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub metadata: AppMetadata,
    pub analysis: AnalysisRecord,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest {path} line {line}: {reason}")]
    ManifestParse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("record log {path} line {line} is unreadable: {reason}")]
    CorruptLog {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("k = {k} exceeds the {available} records available")]
    KTooLarge { k: usize, available: usize },
    #[error("top-k list must be non-empty, positive and strictly ascending: {0:?}")]
    InvalidKs(Vec<usize>),
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Reads a JSONL manifest of complete [`AppMetadata`] rows. Missing or
/// unknown fields, out-of-range ratings and duplicate app ids are rejected.
pub fn read_manifest(path: &Path) -> Result<Vec<AppMetadata>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let err = |line: usize, reason: String| CorpusError::ManifestParse {
        path: path.display().to_string(),
        line,
        reason,
    };
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: AppMetadata = serde_json::from_str(&line).map_err(|e| err(i + 1, e.to_string()))?;
        if !(0.0..=5.0).contains(&row.avg_rating) {
            return Err(err(i + 1, format!("avg_rating {} outside [0, 5]", row.avg_rating)));
        }
        if row.app_id.is_empty() {
            return Err(err(i + 1, "empty app_id".into()));
        }
        if !seen.insert(row.app_id.clone()) {
            return Err(err(i + 1, format!("duplicate app_id {}", row.app_id)));
        }
        rows.push(row);
    }
    Ok(rows)
}
