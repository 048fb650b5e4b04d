//! Trains the individual models on a small separable set, saves the bundle
//! and shows that reloading preserves every prediction and that tampered
//! files are rejected.
//!
//! cargo run --release --example bundle_io

use obfscan::features::FeatureVector;
use obfscan::labels::{AppLabel, TechniqueSet, ToolLabel};
use obfscan::models::{load_bundle, save_bundle, train_bundle, BundleConfig, LabeledFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feature 0 marks obfuscation, 1..=3 the tool, 4..=6 the techniques.
fn rows(n: usize, seed: u64) -> Vec<LabeledFeatures> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut v: [f64; 37] = std::array::from_fn(|_| rng.gen_range(0.0..100.0));
            v[..7].fill(5.0);
            let label = if i % 3 == 0 {
                AppLabel::clean()
            } else {
                v[0] = 95.0;
                let tool = ToolLabel::ALL[i % 4];
                if let Some(k) = ToolLabel::CLASSIFIED.iter().position(|t| *t == tool) {
                    v[1 + k] = 95.0;
                }
                let set = TechniqueSet { ir: i % 2 == 0, cf: i % 5 < 3, se: i % 7 < 4 };
                for (k, on) in [set.ir, set.cf, set.se].into_iter().enumerate() {
                    if on {
                        v[4 + k] = 95.0;
                    }
                }
                AppLabel::obfuscated(tool, set)
            };
            LabeledFeatures { app_id: Some(format!("row{i}")), features: FeatureVector::new(v).unwrap(), label }
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = BundleConfig::seeded(11);
    config.mlp.epochs = 150;
    config.forest.n_trees = 25;
    let data = rows(120, 1);
    let bundle = train_bundle(&data, &config)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bundle.json");
    save_bundle(&bundle, &path)?;
    let loaded = load_bundle(&path)?;
    let same = data.iter().all(|r| {
        bundle.p_obfuscated(&r.features).to_bits() == loaded.p_obfuscated(&r.features).to_bits()
            && bundle.tool_probs(&r.features) == loaded.tool_probs(&r.features)
            && bundle.technique_probs(&r.features) == loaded.technique_probs(&r.features)
    });
    let size = std::fs::metadata(&path)?.len();
    println!("bundle: {size} bytes, reload preserves all predictions: {same}");

    let text = std::fs::read_to_string(&path)?;
    for (what, edited) in [
        ("format version", text.replacen("\"format_version\":1", "\"format_version\":99", 1)),
        ("truncation", text[..text.len() / 2].to_string()),
    ] {
        std::fs::write(&path, edited)?;
        println!("{what:<15} -> {}", load_bundle(&path).unwrap_err());
    }
    Ok(())
}
