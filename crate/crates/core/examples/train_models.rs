//! Generates a 500-app training corpus and a 200-app test corpus, trains the
//! full model bundle and prints held-out scores.
//!
//! cargo run --release --example train_models -- [OUT_DIR]

use std::path::PathBuf;
use std::time::Instant;

use obfscan::models::{evaluate_bundle, save_bundle, train_bundle, BundleConfig};
use obfscan::synth::{build_labeled_corpus, extract_labeled_features, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let tmp = tempfile::tempdir()?;
    let root = out.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    let start = Instant::now();

    let train = build_labeled_corpus(&CorpusConfig::default(), 1, &root.join("train"))?;
    let test = build_labeled_corpus(&CorpusConfig::default().scaled(0.4), 2, &root.join("test"))?;
    let train_rows = extract_labeled_features(&train.labels, &train.dir)?;
    let test_rows = extract_labeled_features(&test.labels, &test.dir)?;
    println!(
        "corpora: {} train / {} test apps ({:.1}s)",
        train_rows.len(),
        test_rows.len(),
        start.elapsed().as_secs_f64()
    );

    let bundle = train_bundle(&train_rows, &BundleConfig::seeded(7))?;
    println!("trained ({:.1}s)", start.elapsed().as_secs_f64());
    let eval = evaluate_bundle(&bundle, &test_rows);
    println!("detector accuracy     {:.3}", eval.detector.accuracy());
    for (tool, m) in &eval.tools {
        println!("{:<9} macro-F1     {:.3}", tool.to_string(), m.macro_f1());
    }
    for (t, m) in &eval.techniques {
        println!("{:<9} accuracy     {:.3}", t.to_string(), m.accuracy());
    }
    if let Some(dir) = out {
        save_bundle(&bundle, &dir.join("bundle.json"))?;
        println!("bundle written to {}", dir.join("bundle.json").display());
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
