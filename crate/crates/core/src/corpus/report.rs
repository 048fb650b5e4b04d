use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::labels::{Technique, ToolLabel};

use super::{
    aggregate_by_genre, aggregate_by_year, developer_buckets, rank_top_k, CorpusError,
    CorpusRecord, DeveloperReport, GroupStats, TopKRow,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub overall: GroupStats,
    pub by_year: BTreeMap<i32, GroupStats>,
    pub by_genre: BTreeMap<String, GroupStats>,
    pub developers: DeveloperReport,
    pub topk_rows: Vec<TopKRow>,
}

pub fn build_report(
    records: &[CorpusRecord],
    ks: &[usize],
    top_devs: usize,
) -> Result<CorpusReport, CorpusError> {
    Ok(CorpusReport {
        overall: GroupStats::of(records),
        by_year: aggregate_by_year(records),
        by_genre: aggregate_by_genre(records),
        developers: developer_buckets(records, top_devs)?,
        topk_rows: rank_top_k(records, ks)?,
    })
}

/// Files written by [`emit_report`].
pub const REPORT_FILES: [&str; 9] = [
    "report.json",
    "report_by_year.json",
    "report_by_year.csv",
    "report_by_genre.json",
    "report_by_genre.csv",
    "report_developers.json",
    "report_developers.csv",
    "report_topk.json",
    "report_topk.csv",
];

const GROUP_COLUMNS: [&str; 14] = [
    "total",
    "analysed",
    "errors",
    "obfuscated",
    "non_obfuscated",
    "obfuscated_pct",
    "proguard_pct",
    "allatori_pct",
    "dasho_pct",
    "other_pct",
    "ir_pct",
    "cf_pct",
    "se_pct",
    "multi_technique_pct",
];

const TOPK_COLUMNS: [&str; 10] = [
    "top_k",
    "total_apps",
    "obfuscation_pct",
    "proguard_pct",
    "allatori_pct",
    "dasho_pct",
    "other_pct",
    "ir_pct",
    "cf_pct",
    "se_pct",
];

fn f2(v: f64) -> String {
    format!("{v:.2}")
}

/// Percentage cell; empty when the group has no obfuscated apps.
fn opt_f2(v: Option<&f64>) -> String {
    v.map(|v| f2(*v)).unwrap_or_default()
}

fn group_row(key: String, s: &GroupStats) -> Vec<String> {
    let mut row = vec![
        key,
        s.total.to_string(),
        s.analysed.to_string(),
        s.errors.to_string(),
        s.obfuscated.to_string(),
        s.non_obfuscated.to_string(),
        f2(s.obfuscated_pct),
    ];
    row.extend(ToolLabel::ALL.iter().map(|t| opt_f2(s.tool_pcts.get(t))));
    row.extend(Technique::ALL.iter().map(|t| opt_f2(s.technique_pcts.get(t))));
    row.push(f2(s.multi_technique_pct));
    row
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CorpusError::io(path, e))
}

/// Writes every report as JSON (full precision) and CSV (two decimals) into
/// `dir`. Column and key order are fixed, so equal reports give equal bytes.
pub fn emit_report(report: &CorpusReport, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    write_json(&dir.join("report.json"), report)?;

    write_json(&dir.join("report_by_year.json"), &report.by_year)?;
    let mut header = vec!["year"];
    header.extend(GROUP_COLUMNS);
    write_csv(
        &dir.join("report_by_year.csv"),
        &header,
        report.by_year.iter().map(|(y, s)| group_row(y.to_string(), s)),
    )?;

    write_json(&dir.join("report_by_genre.json"), &report.by_genre)?;
    header[0] = "genre";
    write_csv(
        &dir.join("report_by_genre.csv"),
        &header,
        report.by_genre.iter().map(|(g, s)| group_row(g.clone(), s)),
    )?;

    write_json(&dir.join("report_developers.json"), &report.developers)?;
    write_csv(
        &dir.join("report_developers.csv"),
        &["bucket", "developers"],
        report
            .developers
            .buckets
            .iter()
            .map(|b| vec![b.bucket.label().to_string(), b.developers.to_string()]),
    )?;

    write_json(&dir.join("report_topk.json"), &report.topk_rows)?;
    write_csv(
        &dir.join("report_topk.csv"),
        &TOPK_COLUMNS,
        report.topk_rows.iter().map(|r| {
            let mut row = vec![r.top_k.clone(), r.total_apps.to_string()];
            row.extend(
                [
                    r.obfuscation_pct,
                    r.proguard_pct,
                    r.allatori_pct,
                    r.dasho_pct,
                    r.other_pct,
                    r.ir_pct,
                    r.cf_pct,
                    r.se_pct,
                ]
                .map(f2),
            );
            row
        }),
    )?;
    Ok(())
}

/// Reads back the combined `report.json` written by [`emit_report`].
pub fn read_report_json(dir: &Path) -> Result<CorpusReport, CorpusError> {
    let path = dir.join("report.json");
    let bytes = fs::read(&path).map_err(|e| CorpusError::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
