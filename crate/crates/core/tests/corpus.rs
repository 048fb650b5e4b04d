mod common;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use common::{errored, meta, planted, techniques};
use obfscan::corpus::{
    aggregate_by_genre, aggregate_by_year, build_report, bucket_for, developer_buckets, emit_report,
    rank_top_k, read_manifest, read_record_log, read_report_json, scan_corpus, AppMetadata,
    CorpusError, CorpusRecord, DeveloperBucket, ScanOptions, REPORT_FILES,
};
use obfscan::labels::{Technique, ToolLabel};
use obfscan::models::{train_bundle, BundleConfig, ModelBundle};
use obfscan::synth::{build_labeled_corpus, CorpusConfig, APK_DIR, MANIFEST_FILE};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick_bundle() -> ModelBundle {
    let mut c = BundleConfig::seeded(1);
    c.mlp.epochs = 100;
    c.forest.n_trees = 10;
    train_bundle(&common::planted_feature_rows(60, 9), &c).unwrap()
}

fn write_manifest(path: &Path, rows: &[AppMetadata]) {
    let text: String = rows.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    fs::write(path, text).unwrap();
}

#[test]
fn missing_file_gives_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = build_labeled_corpus(&CorpusConfig::default().scaled(0.01), 1, dir.path()).unwrap();
    let mut rows: Vec<AppMetadata> = corpus.metadata.iter().take(2).cloned().collect();
    rows.push(meta("com.absent", "Tools", "nobody", 1, 2020));
    let manifest = dir.path().join("three.jsonl");
    write_manifest(&manifest, &rows);
    let out = scan_corpus(
        &dir.path().join(APK_DIR),
        &manifest,
        &quick_bundle(),
        &ScanOptions::new(dir.path().join("log.jsonl")),
    )
    .unwrap();
    assert_eq!(out.records.len(), 3);
    let errors: Vec<&CorpusRecord> = out.records.iter().filter(|r| r.analysis.is_error()).collect();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].metadata.app_id, "com.absent");
    assert_eq!(errors[0].analysis.error.as_ref().unwrap().kind, "missing_file");
    for r in &out.records {
        assert_eq!(r.metadata.app_id, r.analysis.apk_id);
    }
}

#[test]
fn empty_manifest_gives_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("empty.jsonl");
    fs::write(&manifest, "").unwrap();
    let out = scan_corpus(dir.path(), &manifest, &quick_bundle(), &ScanOptions::new(dir.path().join("log.jsonl"))).unwrap();
    assert!(out.records.is_empty());
    assert!(out.complete);
}

#[test]
fn malformed_manifest_aborts_before_scanning() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bad.jsonl");
    fs::write(&manifest, "{\"app_id\":\"a\"}\n").unwrap();
    let log = dir.path().join("log.jsonl");
    let r = scan_corpus(dir.path(), &manifest, &quick_bundle(), &ScanOptions::new(&log));
    assert!(matches!(r, Err(CorpusError::ManifestParse { line: 1, .. })));
    assert!(!log.exists());
}

#[test]
fn resumed_scan_equals_cold_scan() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = build_labeled_corpus(&CorpusConfig::default().scaled(0.06), 2, dir.path()).unwrap();
    let apks = dir.path().join(APK_DIR);
    let manifest = dir.path().join(MANIFEST_FILE);
    let bundle = quick_bundle();

    let cold_log = dir.path().join("cold.jsonl");
    let cold = scan_corpus(&apks, &manifest, &bundle, &ScanOptions { workers: 3, ..ScanOptions::new(&cold_log) }).unwrap();
    assert_eq!(cold.records.len(), corpus.metadata.len());

    let warm_log = dir.path().join("warm.jsonl");
    let partial = ScanOptions {
        workers: 2,
        stop_after: Some(7),
        ..ScanOptions::new(&warm_log)
    };
    let first = scan_corpus(&apks, &manifest, &bundle, &partial).unwrap();
    assert_eq!(first.scanned, 7);
    assert!(!first.complete);
    // A torn final append is discarded on resume.
    let mut f = fs::OpenOptions::new().append(true).open(&warm_log).unwrap();
    std::io::Write::write_all(&mut f, b"{\"metadata\":{\"app_id\":").unwrap();
    drop(f);
    let second = scan_corpus(&apks, &manifest, &bundle, &ScanOptions { workers: 4, ..ScanOptions::new(&warm_log) }).unwrap();
    assert_eq!(second.resumed, 7);
    assert!(second.complete);
    assert_eq!(second.records, cold.records);

    let line_set = |p: &Path| -> HashSet<String> {
        fs::read_to_string(p).unwrap().lines().map(String::from).collect()
    };
    assert_eq!(line_set(&cold_log), line_set(&warm_log));
    assert_eq!(read_record_log(&warm_log).unwrap().len(), cold.records.len());
}

#[test]
fn corrupt_log_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    fs::write(&log, "not json\n{}\n").unwrap();
    assert!(matches!(read_record_log(&log), Err(CorpusError::CorruptLog { line: 1, .. })));
}

#[test]
fn manifest_rejects_duplicates_and_bad_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let a = meta("a", "Tools", "d", 1, 2020);
    write_manifest(&path, &[a.clone(), a.clone()]);
    assert!(matches!(read_manifest(&path), Err(CorpusError::ManifestParse { line: 2, .. })));
    let mut bad = a;
    bad.avg_rating = 5.5;
    write_manifest(&path, &[bad]);
    assert!(read_manifest(&path).is_err());
}

#[test]
fn planted_year_rate_is_exact() {
    let mut records = Vec::new();
    for i in 0..10 {
        let outcome = (i < 5).then_some((ToolLabel::ProGuard, techniques("IR")));
        records.push(planted(meta(&format!("a{i}"), "Tools", "d", 1, 2016), outcome));
    }
    let by_year = aggregate_by_year(&records);
    assert_eq!(by_year[&2016].obfuscated_pct, 50.0);
    assert!(!by_year.contains_key(&2017));
}

#[test]
fn single_proguard_app_is_all_proguard() {
    let records = vec![planted(meta("a", "Tools", "d", 1, 2020), Some((ToolLabel::ProGuard, techniques("IR"))))];
    let s = &aggregate_by_year(&records)[&2020];
    assert_eq!(s.tool_pcts[&ToolLabel::ProGuard], 100.0);
    for t in [ToolLabel::Allatori, ToolLabel::DashO, ToolLabel::Other] {
        assert_eq!(s.tool_pcts[&t], 0.0);
    }
}

#[test]
fn genre_examples() {
    let mut records = Vec::new();
    for i in 0..10 {
        let outcome = (i < 8).then_some((ToolLabel::Allatori, techniques("IR CF SE")));
        records.push(planted(meta(&format!("c{i}"), "Casino", "d", 1, 2020), outcome));
    }
    for i in 0..4 {
        records.push(planted(meta(&format!("t{i}"), "Tools", "d", 1, 2020), None));
    }
    let g = aggregate_by_genre(&records);
    assert_eq!(g["Casino"].obfuscated_pct, 80.0);
    assert_eq!(g["Casino"].multi_technique_pct, 100.0);
    assert_eq!(g["Tools"].obfuscated_pct, 0.0);
    assert!(g["Tools"].tool_pcts.is_empty());
}

#[test]
fn errors_are_counted_but_excluded_from_percentages() {
    let records = vec![
        planted(meta("a", "Tools", "d", 1, 2020), Some((ToolLabel::DashO, techniques("CF")))),
        planted(meta("b", "Tools", "d", 1, 2020), None),
        errored(meta("c", "Tools", "d", 1, 2020)),
    ];
    let s = &aggregate_by_year(&records)[&2020];
    assert_eq!((s.total, s.errors, s.obfuscated, s.non_obfuscated), (3, 1, 1, 1));
    assert_eq!(s.obfuscated_pct, 50.0);
}

#[test]
fn bucket_boundaries_are_lower_closed() {
    assert_eq!(bucket_for(8, 10), DeveloperBucket::AtLeast80);
    assert_eq!(bucket_for(0, 5), DeveloperBucket::None);
    assert_eq!(bucket_for(6, 10), DeveloperBucket::From60);
    assert_eq!(bucket_for(4, 10), DeveloperBucket::From40);
    assert_eq!(bucket_for(1, 10), DeveloperBucket::Below40);
    assert_eq!(bucket_for(79, 100), DeveloperBucket::From60);
}

#[test]
fn developer_tie_at_cutoff_keeps_smaller_name() {
    let mut records = Vec::new();
    for (dev, n) in [("big", 3), ("zeta", 2), ("alpha", 2)] {
        for i in 0..n {
            records.push(planted(meta(&format!("{dev}{i}"), "Tools", dev, 1, 2020), None));
        }
    }
    records.push(planted(meta("solo", "Tools", "solo", 1, 2020), Some((ToolLabel::Other, techniques("SE")))));
    let r = developer_buckets(&records, 2).unwrap();
    let names: Vec<&str> = r.developers.iter().map(|d| d.developer.as_str()).collect();
    assert_eq!(names, ["big", "alpha"]);
    assert_eq!(r.buckets.iter().map(|b| b.developers).sum::<usize>(), 2);
    assert_eq!(r.single_app.developers, 1);
    assert_eq!(r.single_app.obfuscated, 1);
    assert_eq!(r.single_app.tool_counts[&ToolLabel::Other], 1);
    assert!(matches!(developer_buckets(&records, 0), Err(CorpusError::InvalidTopN)));
}

#[test]
fn top_k_prefix_and_remainder() {
    let records: Vec<CorpusRecord> = (0..5)
        .map(|i| {
            let outcome = (i >= 2).then_some((ToolLabel::ProGuard, techniques("IR")));
            planted(meta(&format!("a{i}"), "Tools", "d", 100 * i as u64, 2020), outcome)
        })
        .collect();
    let rows = rank_top_k(&records, &[3]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].top_k.as_str(), rows[0].total_apps), ("3", 3));
    assert_eq!((rows[1].top_k.as_str(), rows[1].total_apps), ("3+", 2));
    assert_eq!(rows[0].obfuscation_pct, 100.0);
    assert_eq!(rows[1].obfuscation_pct, 0.0);
    assert!(matches!(rank_top_k(&records, &[6]), Err(CorpusError::KTooLarge { k: 6, available: 5 })));
    assert!(matches!(rank_top_k(&records, &[3, 2]), Err(CorpusError::InvalidKs(_))));
}

#[test]
fn report_files_are_stable_and_reparse() {
    let records: Vec<CorpusRecord> = (0..12)
        .map(|i| {
            let outcome = (i % 3 != 0).then_some((ToolLabel::ALL[i % 4], techniques(["IR", "CF", "SE", "IR SE"][i % 4])));
            planted(meta(&format!("a{i:02}"), ["Games", "Tools"][i % 2], &format!("dev{}", i % 4), i as u64, 2016 + (i % 3) as i32), outcome)
        })
        .collect();
    let report = build_report(&records, &[5, 10], 3).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&report, a.path()).unwrap();
    emit_report(&report, b.path()).unwrap();
    for f in REPORT_FILES {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_report_json(a.path()).unwrap(), report);
    let topk = fs::read_to_string(a.path().join("report_topk.csv")).unwrap();
    assert_eq!(topk.lines().count(), 4);
    assert!(topk.lines().nth(1).unwrap().starts_with("5,5,"));
}

#[test]
fn empty_groups_give_header_only_csv() {
    let mut report = build_report(&[planted(meta("a", "Tools", "d", 1, 2020), None)], &[1], 1).unwrap();
    report.by_year.clear();
    report.by_genre.clear();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    for f in ["report_by_year.csv", "report_by_genre.csv"] {
        assert_eq!(fs::read_to_string(dir.path().join(f)).unwrap().lines().count(), 1, "{f}");
    }
}

fn record_strategy() -> impl Strategy<Value = Vec<CorpusRecord>> {
    prop::collection::vec((0u8..6, 0usize..4, 0u8..8, 2016i32..2019, 0u64..50, 0usize..5), 1..60).prop_map(
        |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (kind, tool, tech, year, dl, dev))| {
                    let m = meta(&format!("app{i}"), ["A", "B"][i % 2], &format!("d{dev}"), dl, year);
                    let set = [Technique::IR, Technique::CF, Technique::SE]
                        .into_iter()
                        .enumerate()
                        .filter(|(b, _)| tech >> b & 1 == 1)
                        .map(|(_, t)| t)
                        .collect();
                    match kind {
                        0 => errored(m),
                        1 | 2 => planted(m, None),
                        _ => planted(m, Some((ToolLabel::ALL[tool], set))),
                    }
                })
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregation_partitions_and_tool_shares(records in record_strategy()) {
        for s in aggregate_by_year(&records).values().chain(aggregate_by_genre(&records).values()) {
            prop_assert_eq!(s.obfuscated + s.non_obfuscated + s.errors, s.total);
            if s.obfuscated > 0 {
                let sum: f64 = s.tool_pcts.values().sum();
                prop_assert!((sum - 100.0).abs() <= 0.01);
            }
            for p in s.technique_pcts.values() {
                prop_assert!((0.0..=100.0).contains(p));
            }
            prop_assert!((0.0..=100.0).contains(&s.obfuscated_pct));
        }
    }

    #[test]
    fn aggregation_ignores_record_order(records in record_strategy(), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(aggregate_by_year(&records), aggregate_by_year(&shuffled));
        prop_assert_eq!(aggregate_by_genre(&records), aggregate_by_genre(&shuffled));
        prop_assert_eq!(rank_top_k(&records, &[1]).unwrap(), rank_top_k(&shuffled, &[1]).unwrap());
        prop_assert_eq!(developer_buckets(&records, 3).unwrap(), developer_buckets(&shuffled, 3).unwrap());
    }

    #[test]
    fn top_k_prefixes_nest(records in record_strategy()) {
        let n = records.len();
        prop_assume!(n >= 2);
        let ks: Vec<usize> = (1..n).collect();
        let rows = rank_top_k(&records, &ks).unwrap();
        prop_assert_eq!(rows.len(), ks.len() + 1);
        for (row, k) in rows.iter().zip(&ks) {
            prop_assert_eq!(row.total_apps, *k);
        }
        prop_assert_eq!(rows.last().unwrap().total_apps, 1);
    }
}
