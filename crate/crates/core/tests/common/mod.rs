#![allow(dead_code)]

use obfscan::corpus::{AppMetadata, CorpusRecord};
use obfscan::detector::{AnalysisRecord, TechniqueProbs, ToolProbs};
use obfscan::dex::{NameBag, OpcodeFamily, SymbolTable};
use obfscan::labels::{TechniqueSet, ToolLabel};
use obfscan::synth::builder::{
    ClassSpec, CodeSpec, DexBuilder, FieldSpec, Insn, MethodRef, MethodSpec, ProtoSig, ACC_CONSTRUCTOR,
    ACC_PUBLIC, ACC_STATIC, OBJECT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Count-and-divide reimplementation of the 37-feature vector. Each name is
/// expanded into its multiplicity and inspected char by char.
pub fn naive_features(t: &SymbolTable) -> [f64; 37] {
    fn expand(bag: &NameBag) -> Vec<String> {
        let mut out = Vec::new();
        for (name, n) in bag.iter() {
            for _ in 0..n {
                out.push(name.to_string());
            }
        }
        out
    }
    fn group(names: &[String]) -> [f64; 8] {
        let mut out = [0.0; 8];
        if names.is_empty() {
            return out;
        }
        let total = names.len() as f64;
        for name in names {
            let len = name.chars().count();
            // Empty names share the length-1 bucket.
            let slot = match len {
                0 | 1 => 0,
                2 => 1,
                3 => 2,
                4 => 3,
                _ => 4,
            };
            out[slot] += 1.0;
            let special = name
                .chars()
                .any(|c| !matches!(c, 'a'..='z' | 'A'..='Z' | '0'..='9'));
            let digit = name.chars().any(|c| c.is_ascii_digit());
            if special {
                out[5] += 1.0;
            }
            if digit {
                out[6] += 1.0;
            }
            if special && digit {
                out[7] += 1.0;
            }
        }
        out.map(|c| c * 100.0 / total)
    }
    let mut v = [0.0; 37];
    for (g, bag) in [&t.class_names, &t.method_names, &t.field_names, &t.other_strings]
        .into_iter()
        .enumerate()
    {
        v[g * 8..g * 8 + 8].copy_from_slice(&group(&expand(bag)));
    }
    if t.total_instructions > 0 {
        for (i, f) in [
            OpcodeFamily::Nop,
            OpcodeFamily::Goto,
            OpcodeFamily::Invoke,
            OpcodeFamily::If,
            OpcodeFamily::Move,
        ]
        .into_iter()
        .enumerate()
        {
            v[32 + i] = t.opcode_counts.get(f) as f64 * 100.0 / t.total_instructions as f64;
        }
    }
    v
}

const ALPHABET: &[char] = &[
    'a', 'b', 'q', 'Z', 'K', '0', '7', '9', '$', '_', '-', 'é', 'α', '中', ' ', '/',
];

pub fn random_name(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..9);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

pub fn random_bag(rng: &mut ChaCha8Rng, max: usize) -> NameBag {
    let mut bag = NameBag::new();
    for _ in 0..rng.gen_range(0..=max) {
        let name = random_name(rng);
        bag.insert_n(name, rng.gen_range(1..4));
    }
    bag
}

pub fn random_table(seed: u64) -> SymbolTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = SymbolTable {
        class_names: random_bag(&mut rng, 30),
        method_names: random_bag(&mut rng, 60),
        field_names: random_bag(&mut rng, 40),
        other_strings: random_bag(&mut rng, 80),
        ..SymbolTable::default()
    };
    let mut tracked = 0;
    for f in OpcodeFamily::ALL {
        let n = rng.gen_range(0..50);
        t.opcode_counts.add(f, n);
        tracked += n;
    }
    t.total_instructions = tracked + rng.gen_range(0..100);
    t
}

fn bag_of(names: &[&str]) -> NameBag {
    let mut b = NameBag::new();
    for n in names {
        b.insert(*n);
    }
    b
}

/// Hand-built corner cases for the feature oracle.
pub fn edge_tables() -> Vec<(&'static str, SymbolTable)> {
    let mut out = Vec::new();
    out.push(("all empty", SymbolTable::default()));

    let letters: Vec<String> = ('a'..='z').map(String::from).collect();
    let mut bag = NameBag::new();
    for l in &letters {
        bag.insert(l.clone());
    }
    out.push((
        "all length 1",
        SymbolTable {
            class_names: bag.clone(),
            method_names: bag.clone(),
            field_names: bag.clone(),
            other_strings: bag,
            ..SymbolTable::default()
        },
    ));

    out.push((
        "zero instructions",
        SymbolTable {
            class_names: bag_of(&["Main", "a"]),
            ..SymbolTable::default()
        },
    ));

    let mut only_other = SymbolTable::default();
    only_other.opcode_counts.add(OpcodeFamily::Invoke, 0);
    only_other.total_instructions = 12;
    out.push(("untracked instructions only", only_other));

    let mut single = SymbolTable::default();
    single.opcode_counts.add(OpcodeFamily::Invoke, 10);
    single.total_instructions = 10;
    out.push(("single family", single));

    out.push((
        "character classes",
        SymbolTable {
            method_names: bag_of(&["a$1", "b2", "cd", "e!"]),
            ..SymbolTable::default()
        },
    ));

    out.push((
        "non-latin letters",
        SymbolTable {
            field_names: bag_of(&["αβ", "日本語テキスト", "ø"]),
            ..SymbolTable::default()
        },
    ));

    let mut dup = NameBag::new();
    dup.insert_n("a", 2);
    dup.insert("xy");
    out.push((
        "multiset counts",
        SymbolTable {
            class_names: dup,
            ..SymbolTable::default()
        },
    ));

    out.push((
        "empty string",
        SymbolTable {
            other_strings: bag_of(&["", "long string with spaces"]),
            ..SymbolTable::default()
        },
    ));

    let mut all = SymbolTable {
        class_names: bag_of(&["a", "bb", "ccc", "dddd", "eeeee"]),
        ..SymbolTable::default()
    };
    for f in OpcodeFamily::ALL {
        all.opcode_counts.add(f, 1);
    }
    all.total_instructions = 6;
    out.push(("one per bucket", all));
    out
}

fn rd32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn wr32(b: &mut [u8], off: usize, v: u32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

/// Seeded truncations and structural corruptions of a valid DEX payload. Each
/// mutant breaks a constraint the parser must check, so none may parse.
pub fn dex_mutants(valid: &[u8], seed: u64, n: usize) -> Vec<(String, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let string_n = rd32(valid, 0x38);
    let type_n = rd32(valid, 0x40);
    let type_off = rd32(valid, 0x44) as usize;
    let method_n = rd32(valid, 0x58);
    let method_off = rd32(valid, 0x5c) as usize;
    let class_n = rd32(valid, 0x60);
    let class_off = rd32(valid, 0x64) as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut b = valid.to_vec();
        let what = match i % 8 {
            0 | 1 => {
                let len = rng.gen_range(0..valid.len());
                b.truncate(len);
                format!("truncated to {len} bytes")
            }
            2 => {
                let pos = rng.gen_range(0..4);
                b[pos] ^= 1 << rng.gen_range(0..8);
                format!("magic byte {pos} flipped")
            }
            3 => {
                let field = 0x38 + 8 * rng.gen_range(0..6);
                let size = rd32(&b, field).max(1);
                wr32(&mut b, field, size.saturating_mul(4096) + 0x0100_0000);
                format!("table size at {field:#x} inflated")
            }
            4 => {
                let field = 0x3c + 8 * rng.gen_range(0..6);
                if rd32(&b, field - 4) == 0 {
                    wr32(&mut b, 0x38, u32::MAX / 8);
                    "string table inflated".to_string()
                } else {
                    wr32(&mut b, field, valid.len() as u32 - rng.gen_range(0..4));
                    format!("table offset at {field:#x} moved to end")
                }
            }
            5 if type_n > 0 => {
                let k = rng.gen_range(0..type_n) as usize;
                wr32(&mut b, type_off + 4 * k, string_n + rng.gen_range(0..1000));
                format!("type_id {k} points past string pool")
            }
            6 if method_n > 0 => {
                let k = rng.gen_range(0..method_n) as usize;
                wr32(&mut b, method_off + 8 * k + 4, string_n + rng.gen_range(0..1000));
                format!("method_id {k} name past string pool")
            }
            7 if class_n > 0 => {
                let k = rng.gen_range(0..class_n) as usize;
                wr32(&mut b, class_off + 32 * k, type_n + rng.gen_range(0..1000));
                format!("class_def {k} type past type pool")
            }
            _ => {
                wr32(&mut b, 0x20, valid.len() as u32 + rng.gen_range(1..1000));
                "file_size past end".to_string()
            }
        };
        out.push((what, b));
    }
    out
}

/// Brute-force tool rule: collect the tools at the maximum, pick the first in
/// ProGuard, Allatori, DashO order, and fall back to Other below 0.5.
pub fn oracle_tool(p: [f64; 3]) -> ToolLabel {
    let max = p.iter().cloned().fold(f64::MIN, f64::max);
    if max < 0.5 {
        return ToolLabel::Other;
    }
    let order = [ToolLabel::ProGuard, ToolLabel::Allatori, ToolLabel::DashO];
    let winners: Vec<ToolLabel> = (0..3).filter(|&i| p[i] == max).map(|i| order[i]).collect();
    winners[0]
}

pub fn oracle_techniques(p: [f64; 3]) -> TechniqueSet {
    TechniqueSet {
        ir: p[0] > 0.5,
        cf: p[1] > 0.5,
        se: p[2] > 0.5,
    }
}

pub fn meta(id: &str, genre: &str, developer: &str, downloads: u64, year: i32) -> AppMetadata {
    AppMetadata {
        app_id: id.to_string(),
        genre: genre.to_string(),
        developer: developer.to_string(),
        downloads,
        avg_rating: 4.0,
        rating_count: 100,
        last_update_year: year,
    }
}

/// A record whose analysis states the given outcome; `None` is a clean app.
pub fn planted(meta: AppMetadata, outcome: Option<(ToolLabel, TechniqueSet)>) -> CorpusRecord {
    let mut analysis = AnalysisRecord {
        apk_id: meta.app_id.clone(),
        obfuscated: Some(outcome.is_some()),
        p_obfuscated: Some(if outcome.is_some() { 0.9 } else { 0.1 }),
        tool: None,
        tool_probs: None,
        techniques: None,
        technique_probs: None,
        extraction_stats: None,
        error: None,
    };
    if let Some((tool, techniques)) = outcome {
        analysis.tool = Some(tool);
        analysis.tool_probs = Some(ToolProbs::new([0.5; 3]));
        analysis.techniques = Some(techniques);
        analysis.technique_probs = Some(TechniqueProbs::new([0.5; 3]));
    }
    CorpusRecord { metadata: meta, analysis }
}

pub fn errored(meta: AppMetadata) -> CorpusRecord {
    let analysis = AnalysisRecord::error(meta.app_id.clone(), "missing_file", "gone");
    CorpusRecord { metadata: meta, analysis }
}

pub fn techniques(s: &str) -> TechniqueSet {
    TechniqueSet {
        ir: s.contains("IR"),
        cf: s.contains("CF"),
        se: s.contains("SE"),
    }
}

/// `La/B;` with `<init>`, `run` and field `x`; `run` holds nop, goto,
/// invoke-virtual, if-eq, move and add-int.
pub fn class_a_b() -> DexBuilder {
    let hash = MethodRef {
        class: OBJECT.into(),
        name: "hashCode".into(),
        proto: ProtoSig {
            return_type: "I".into(),
            params: Vec::new(),
        },
    };
    let mut class = ClassSpec::new("La/B;");
    class.fields.push(FieldSpec {
        name: "x".into(),
        type_desc: "I".into(),
    });
    class.methods.push(MethodSpec {
        name: "<init>".into(),
        proto: ProtoSig::void(),
        access: ACC_PUBLIC | ACC_CONSTRUCTOR,
        code: None,
    });
    class.methods.push(MethodSpec {
        name: "run".into(),
        proto: ProtoSig::void(),
        access: ACC_PUBLIC | ACC_STATIC,
        code: Some(CodeSpec {
            registers: 4,
            ins: 0,
            outs: 1,
            insns: vec![
                Insn::Nop,
                Insn::Goto,
                Insn::InvokeVirtual(hash),
                Insn::IfEq,
                Insn::Move,
                Insn::AddInt,
            ],
        }),
    });
    DexBuilder {
        classes: vec![class],
        ..DexBuilder::default()
    }
}

pub fn random_vector(rng: &mut ChaCha8Rng) -> obfscan::features::FeatureVector {
    let mut v = [0.0; 37];
    for x in &mut v {
        *x = rng.gen_range(0.0..=100.0);
    }
    obfscan::features::FeatureVector::new(v).unwrap()
}

/// Largest relative gap between the analytic gradient and a central finite
/// difference of the mean loss, over every parameter.
pub fn max_gradient_error(
    model: &obfscan::models::MlpModel,
    rows: &[(obfscan::features::FeatureVector, bool)],
) -> f64 {
    let (_, analytic) = model.loss_and_gradient(rows);
    let base = model.parameters();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut probe = model.clone();
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_parameters(&p);
        let up = probe.loss_and_gradient(rows).0;
        p[i] = base[i] - h;
        probe.set_parameters(&p);
        let down = probe.loss_and_gradient(rows).0;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    worst
}

/// MLP with small random weights and identity scaling.
pub fn random_mlp(hidden: &[usize], seed: u64) -> obfscan::models::MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = obfscan::models::MlpModel::zeros(hidden);
    let p: Vec<f64> = (0..m.n_parameters()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    m.set_parameters(&p);
    m
}

/// Feature rows whose label is readable from a few coordinates: feature 0
/// decides obfuscation, 1..=3 the tool and 4..=6 the techniques.
pub fn planted_feature_rows(n: usize, seed: u64) -> Vec<obfscan::models::LabeledFeatures> {
    use obfscan::labels::AppLabel;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tools = ToolLabel::ALL;
    (0..n)
        .map(|i| {
            let mut v = [0.0; 37];
            for x in &mut v[7..] {
                *x = rng.gen_range(0.0..100.0);
            }
            let label = if i % 3 == 0 {
                v[0] = rng.gen_range(0.0..20.0);
                AppLabel::clean()
            } else {
                v[0] = rng.gen_range(80.0..100.0);
                let tool = tools[i % 4];
                if let Some(slot) = ToolLabel::CLASSIFIED.iter().position(|t| *t == tool) {
                    v[1 + slot] = 90.0;
                }
                let set = TechniqueSet {
                    ir: i % 2 == 0,
                    cf: i % 5 < 3,
                    se: i % 7 < 4,
                };
                v[4] = if set.ir { 90.0 } else { 5.0 };
                v[5] = if set.cf { 90.0 } else { 5.0 };
                v[6] = if set.se { 90.0 } else { 5.0 };
                AppLabel::obfuscated(tool, set)
            };
            obfscan::models::LabeledFeatures {
                app_id: Some(format!("row{i}")),
                features: obfscan::features::FeatureVector::new(v).unwrap(),
                label,
            }
        })
        .collect()
}
