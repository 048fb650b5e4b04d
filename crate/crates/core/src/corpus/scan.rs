use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::detector::{analyze_path, AnalysisRecord};
use crate::models::ModelBundle;

use super::{read_manifest, AppMetadata, CorpusError, CorpusRecord};

/// File name of the append-only record log inside a scan output directory.
pub const RECORD_LOG: &str = "records.jsonl";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOptions {
    pub workers: usize,
    pub log_path: PathBuf,
    /// Stop after appending this many new records, leaving the rest for a
    /// later resume.
    pub stop_after: Option<usize>,
}

impl ScanOptions {
    pub fn new(log_path: impl Into<PathBuf>) -> Self {
        ScanOptions {
            workers: 1,
            log_path: log_path.into(),
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    /// Completed records in manifest order.
    pub records: Vec<CorpusRecord>,
    /// Records taken over from an existing log.
    pub resumed: usize,
    /// Records analysed in this run.
    pub scanned: usize,
    /// Every manifest row has a record.
    pub complete: bool,
}

/// Parses a record log. A trailing line without its newline is an
/// interrupted append and is ignored; any other unreadable line is an error.
/// Returns the records and the byte length of the intact prefix.
fn parse_log(path: &Path, bytes: &[u8]) -> Result<(Vec<CorpusRecord>, usize), CorpusError> {
    let intact = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut records = Vec::new();
    for (i, line) in bytes[..intact].split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record = serde_json::from_slice(line).map_err(|e| CorpusError::CorruptLog {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((records, intact))
}

/// Reads every complete record of a log.
pub fn read_record_log(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(parse_log(path, &bytes)?.0)
}

fn analyze_row(apk_dir: &Path, bundle: &ModelBundle, meta: &AppMetadata) -> CorpusRecord {
    let path = apk_dir.join(format!("{}.apk", meta.app_id));
    let analysis = if path.is_file() {
        analyze_path(bundle, &path, &meta.app_id)
    } else {
        AnalysisRecord::error(
            meta.app_id.as_str(),
            "missing_file",
            format!("{} not found", path.display()),
        )
    };
    CorpusRecord {
        metadata: meta.clone(),
        analysis,
    }
}

/// Analyses every manifest row whose app id is not yet in the record log,
/// appending one JSON line per app. APKs are looked up as
/// `<apk_dir>/<app_id>.apk`; missing or unreadable files give error-tagged
/// records.
pub fn scan_corpus(
    apk_dir: &Path,
    manifest: &Path,
    bundle: &ModelBundle,
    options: &ScanOptions,
) -> Result<ScanOutcome, CorpusError> {
    let rows = read_manifest(manifest)?;
    let log_path = &options.log_path;
    if let Some(parent) = log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }

    let mut done: HashMap<String, CorpusRecord> = HashMap::new();
    if log_path.exists() {
        let bytes = fs::read(log_path).map_err(|e| CorpusError::io(log_path, e))?;
        let (records, intact) = parse_log(log_path, &bytes)?;
        if intact < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of an interrupted append",
                log_path.display(),
                bytes.len() - intact
            );
            let f = OpenOptions::new()
                .write(true)
                .open(log_path)
                .map_err(|e| CorpusError::io(log_path, e))?;
            f.set_len(intact as u64).map_err(|e| CorpusError::io(log_path, e))?;
        }
        for r in records {
            done.entry(r.metadata.app_id.clone()).or_insert(r);
        }
    }
    let resumed = rows.iter().filter(|m| done.contains_key(&m.app_id)).count();
    let pending: Vec<&AppMetadata> = rows.iter().filter(|m| !done.contains_key(&m.app_id)).collect();

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)
        .map_err(|e| CorpusError::io(log_path, e))?;
    let log = Mutex::new(file);
    let next = AtomicUsize::new(0);
    let appended = Mutex::new(Vec::new());
    let workers = options.workers.max(1).min(pending.len().max(1));

    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| -> Result<(), CorpusError> {
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(meta) = pending.get(i) else {
                            return Ok(());
                        };
                        let record = analyze_row(apk_dir, bundle, meta);
                        let mut line = serde_json::to_vec(&record)?;
                        line.push(b'\n');
                        let mut new = appended.lock().expect("record list poisoned");
                        if options.stop_after.is_some_and(|limit| new.len() >= limit) {
                            return Ok(());
                        }
                        let mut f = log.lock().expect("record log poisoned");
                        f.write_all(&line).map_err(|e| CorpusError::io(log_path, e))?;
                        f.flush().map_err(|e| CorpusError::io(log_path, e))?;
                        new.push(record);
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("scan worker panicked"))
    })?;

    let appended = appended.into_inner().expect("record list poisoned");
    let scanned = appended.len();
    for r in appended {
        done.insert(r.metadata.app_id.clone(), r);
    }
    let records: Vec<CorpusRecord> = rows.iter().filter_map(|m| done.remove(&m.app_id)).collect();
    Ok(ScanOutcome {
        complete: records.len() == rows.len(),
        records,
        resumed,
        scanned,
    })
}
