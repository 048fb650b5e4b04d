//! Prints the 37-value feature vector of an APK next to the same vector for a
//! heavily obfuscated generated app.
//!
//! cargo run --example extract_features -- [APK]

use obfscan::dex::{load_symbols, symbols_from_bytes};
use obfscan::features::{compute_features, feature_names, FeatureCounts};
use obfscan::labels::TechniqueSet;
use obfscan::synth::{generate_app, GenerationProfile, ToolStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (label, symbols) = match std::env::args().nth(1) {
        Some(path) => (path.clone(), load_symbols(&path)?),
        None => {
            let app = generate_app(&GenerationProfile::natural(3))?;
            ("natural app".to_string(), symbols_from_bytes(&app.apk_bytes()?)?)
        }
    };
    let obf = generate_app(&GenerationProfile::preset(ToolStyle::DashoLike, TechniqueSet::ALL, 3)?)?;
    let obf_symbols = symbols_from_bytes(&obf.apk_bytes()?)?;

    let a = compute_features(&symbols);
    let b = compute_features(&obf_symbols);
    println!("{:<28} {:>12} {:>12}", "feature", label, "dasho IR+CF+SE");
    for (i, name) in feature_names().iter().enumerate() {
        println!("{name:<28} {:>12.2} {:>12.2}", a.values()[i], b.values()[i]);
    }
    println!("\ncounts: {:?}", FeatureCounts::of(&symbols));
    println!("counts: {:?}", FeatureCounts::of(&obf_symbols));
    Ok(())
}
