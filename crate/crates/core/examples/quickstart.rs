//! The whole pipeline in one process: synthesise, extract, train, scan and
//! report. `scripts/quickstart.sh` does the same through the CLI.
//!
//! cargo run --release --example quickstart -- [OUT_DIR]

use std::path::PathBuf;

use obfscan::corpus::{build_report, emit_report, scan_corpus, ScanOptions, RECORD_LOG};
use obfscan::models::{evaluate_bundle, save_bundle, train_bundle, write_labeled_features, BundleConfig};
use obfscan::synth::{build_labeled_corpus, extract_labeled_features, CorpusConfig, APK_DIR, MANIFEST_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let train = build_labeled_corpus(&CorpusConfig::default(), 1, &out.join("train"))?;
    let scan = build_labeled_corpus(&CorpusConfig::default().scaled(0.4), 2, &out.join("corpus"))?;
    println!("synth: {} training apps, {} apps to scan", train.labels.len(), scan.labels.len());

    let rows = extract_labeled_features(&train.labels, &train.dir)?;
    write_labeled_features(&out.join("train/features.jsonl"), &rows)?;
    let bundle = train_bundle(&rows, &BundleConfig::seeded(1))?;
    save_bundle(&bundle, &out.join("bundle.json"))?;
    let held_out = extract_labeled_features(&scan.labels, &scan.dir)?;
    println!("train: held-out detector accuracy {:.3}", evaluate_bundle(&bundle, &held_out).detector.accuracy());

    let outcome = scan_corpus(
        &scan.dir.join(APK_DIR),
        &scan.dir.join(MANIFEST_FILE),
        &bundle,
        &ScanOptions::new(out.join("scan").join(RECORD_LOG)),
    )?;
    println!("scan: {} records", outcome.records.len());

    let report = build_report(&outcome.records, &[50, 100], 20)?;
    emit_report(&report, &out.join("reports"))?;
    println!(
        "report: {:.2}% obfuscated, files in {}",
        report.overall.obfuscated_pct,
        out.join("reports").display()
    );
    Ok(())
}
