//! Writes a labelled synthetic corpus (APKs, labels and manifest) and
//! summarises it per cell.
//!
//! cargo run --release --example synth_corpus -- OUT_DIR [SCALE] [SEED]

use std::collections::BTreeMap;

use obfscan::synth::{build_labeled_corpus, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().ok_or("usage: synth_corpus OUT_DIR [SCALE] [SEED]")?;
    let scale: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let corpus = build_labeled_corpus(&CorpusConfig::default().scaled(scale), seed, out.as_ref())?;
    let mut cells: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &corpus.labels {
        *cells.entry(r.cell.as_str()).or_default() += 1;
    }
    println!("{} apps in {}", corpus.labels.len(), corpus.dir.display());
    for (cell, n) in cells {
        println!("  {cell:<22} {n:>4}");
    }
    let years = corpus.metadata.iter().map(|m| m.last_update_year);
    let (lo, hi) = years.clone().fold((i32::MAX, i32::MIN), |(l, h), y| (l.min(y), h.max(y)));
    println!("last-update years {lo}..={hi}");
    let sample = &corpus.labels[0];
    println!("first label: {}", serde_json::to_string(sample)?);
    Ok(())
}
