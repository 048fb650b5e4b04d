//! Opens an APK or bare DEX file and prints its container layout, header
//! facts and extracted symbol table. Without an argument a generated app is
//! used.
//!
//! cargo run --example parse_dex -- [PATH]

use obfscan::dex::{container_from_bytes, extract_symbols, merge_symbols, parse_dex, OpcodeFamily};
use obfscan::synth::{generate_app, GenerationProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(path)?,
        None => {
            let mut profile = GenerationProfile::natural(42);
            profile.dex_files = 2;
            generate_app(&profile)?.apk_bytes()?
        }
    };
    let container = container_from_bytes(&bytes)?;
    println!("{} archive entries, {} DEX payloads", container.entry_names.len(), container.dex.len());

    let mut tables = Vec::new();
    for entry in &container.dex {
        let dex = parse_dex(&entry.payload)?;
        println!(
            "{:<14} v{} {:>7} bytes  strings {:>5}  types {:>4}  methods {:>4}  fields {:>4}  classes {:>4}  code items {:>4}",
            entry.path,
            dex.version(),
            entry.payload.len(),
            dex.string_pool.len(),
            dex.type_ids.len(),
            dex.method_entries.len(),
            dex.field_entries.len(),
            dex.class_defs.len(),
            dex.code_units.len(),
        );
        tables.push(extract_symbols(&dex));
    }
    let symbols = merge_symbols(&tables);

    println!();
    for (group, bag) in [
        ("class names", &symbols.class_names),
        ("method names", &symbols.method_names),
        ("field names", &symbols.field_names),
        ("other strings", &symbols.other_strings),
    ] {
        let sample: Vec<&str> = bag.iter().map(|(n, _)| n).take(6).collect();
        println!("{group:<14} {:>6}  e.g. {}", bag.len(), sample.join(" "));
    }
    println!("instructions   {:>6}", symbols.total_instructions);
    for f in OpcodeFamily::ALL {
        println!("  {:<12} {:>6}", f.name(), symbols.opcode_counts.get(f));
    }
    Ok(())
}
