//! Trains a bundle on a small synthetic corpus, then analyses fresh apps of
//! every tool style and prints the resulting records.
//!
//! cargo run --release --example detect_obfuscation -- [BUNDLE]

use obfscan::detector::analyze;
use obfscan::dex::symbols_from_bytes;
use obfscan::labels::{Technique, TechniqueSet};
use obfscan::models::{load_bundle, train_bundle, BundleConfig};
use obfscan::synth::{build_labeled_corpus, extract_labeled_features, generate_app, CorpusConfig, GenerationProfile, ToolStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = match std::env::args().nth(1) {
        Some(path) => load_bundle(path.as_ref())?,
        None => {
            let dir = tempfile::tempdir()?;
            let corpus = build_labeled_corpus(&CorpusConfig::default().scaled(0.3), 5, dir.path())?;
            let rows = extract_labeled_features(&corpus.labels, &corpus.dir)?;
            train_bundle(&rows, &BundleConfig::seeded(5))?
        }
    };

    let set = |ts: &[Technique]| ts.iter().copied().collect::<TechniqueSet>();
    let cases = [
        ("natural", GenerationProfile::natural(900)),
        ("proguard IR", GenerationProfile::preset(ToolStyle::ProguardLike, set(&[Technique::IR]), 901)?),
        ("allatori all", GenerationProfile::preset(ToolStyle::AllatoriLike, TechniqueSet::ALL, 902)?),
        ("dasho all", GenerationProfile::preset(ToolStyle::DashoLike, TechniqueSet::ALL, 903)?),
        ("other CF", GenerationProfile::preset(ToolStyle::OtherLike, set(&[Technique::CF]), 904)?),
    ];
    for (name, profile) in cases {
        let symbols = symbols_from_bytes(&generate_app(&profile)?.apk_bytes()?)?;
        let record = analyze(&bundle, &symbols, name);
        let verdict = match (record.tool, record.techniques) {
            (Some(tool), Some(t)) => format!("obfuscated by {tool} using {t}"),
            _ => "not obfuscated".to_string(),
        };
        println!("{name:<13} p={:.3}  {verdict}", record.p_obfuscated.unwrap_or(f64::NAN));
    }
    Ok(())
}
