//! Scans a synthetic corpus, interrupting and resuming halfway, then builds
//! the aggregate report and prints its tables.
//!
//! cargo run --release --example scan_and_report -- [OUT_DIR]

use std::path::PathBuf;

use obfscan::corpus::{build_report, emit_report, scan_corpus, ScanOptions, RECORD_LOG};
use obfscan::models::{train_bundle, BundleConfig};
use obfscan::synth::{build_labeled_corpus, extract_labeled_features, CorpusConfig, APK_DIR, MANIFEST_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let train = build_labeled_corpus(&CorpusConfig::default().scaled(0.4), 1, &root.join("train"))?;
    let rows = extract_labeled_features(&train.labels, &train.dir)?;
    let bundle = train_bundle(&rows, &BundleConfig::seeded(1))?;

    let corpus = build_labeled_corpus(&CorpusConfig::default(), 2, &root.join("corpus"))?;
    let apks = corpus.dir.join(APK_DIR);
    let manifest = corpus.dir.join(MANIFEST_FILE);
    let log = root.join(RECORD_LOG);
    let first = scan_corpus(&apks, &manifest, &bundle, &ScanOptions { stop_after: Some(200), ..ScanOptions::new(&log) })?;
    println!("first pass: scanned {}, complete {}", first.scanned, first.complete);
    let done = scan_corpus(&apks, &manifest, &bundle, &ScanOptions::new(&log))?;
    println!("resumed {} records, scanned {}, complete {}", done.resumed, done.scanned, done.complete);

    let report = build_report(&done.records, &[100, 250], 20)?;
    let o = &report.overall;
    println!("\n{} apps, {} analysed, {:.2}% obfuscated", o.total, o.analysed, o.obfuscated_pct);
    println!("\nyear  apps  obf%");
    for (year, s) in &report.by_year {
        println!("{year}  {:>4}  {:>5.2}", s.total, s.obfuscated_pct);
    }
    println!("\ntop_k  apps  obf%   proguard allatori dasho other | IR     CF     SE");
    for r in &report.topk_rows {
        println!(
            "{:<6} {:>4}  {:>5.2}  {:>8.2} {:>8.2} {:>5.2} {:>5.2} | {:>5.2}  {:>5.2}  {:>5.2}",
            r.top_k, r.total_apps, r.obfuscation_pct, r.proguard_pct, r.allatori_pct, r.dasho_pct, r.other_pct,
            r.ir_pct, r.cf_pct, r.se_pct
        );
    }
    println!("\ndeveloper buckets (top 20):");
    for b in &report.developers.buckets {
        println!("  {:<8} {}", b.bucket.label(), b.developers);
    }
    let out = root.join("reports");
    emit_report(&report, &out)?;
    println!("\nreport files in {}", out.display());
    Ok(())
}
