//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::HashSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use common::{meta, planted, techniques};
use obfscan::corpus::{
    aggregate_by_year, build_report, developer_buckets, emit_report, read_record_log, scan_corpus,
    ScanOptions,
};
use obfscan::detector::{resolve_techniques, resolve_tool, TechniqueProbs, ToolProbs};
use obfscan::dex::{parse_dex, symbols_from_bytes};
use obfscan::features::{compute_features, length_bucket_percentages, FeatureVector};
use obfscan::labels::{Technique, TechniqueSet, ToolLabel};
use obfscan::models::{
    evaluate_bundle, save_bundle, train_bundle, train_mlp, train_random_forest, BinaryClassifier,
    BundleConfig, Dataset, ForestConfig, LabeledFeatures, MlpConfig, ModelBundle,
};
use obfscan::synth::{
    build_labeled_corpus, extract_labeled_features, generate_app, generate_dex, CorpusConfig,
    GenerationProfile, LabeledCorpus, ToolStyle, APK_DIR, MANIFEST_FILE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn c1_feature_oracle() -> Outcome {
    let start = Instant::now();
    let mut tables: Vec<(String, obfscan::dex::SymbolTable)> =
        (0..50).map(|s| (format!("random {s}"), common::random_table(1000 + s))).collect();
    tables.extend(common::edge_tables().into_iter().map(|(n, t)| (n.to_string(), t)));
    let mut worst: f64 = 0.0;
    for (name, t) in &tables {
        let got = compute_features(t);
        let want = common::naive_features(t);
        for (i, (g, w)) in got.values().iter().zip(want).enumerate() {
            let d = (g - w).abs();
            ensure!(d <= 1e-9, "{name}: feature {i} is {g}, oracle {w}");
            worst = worst.max(d);
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{} tables, max diff {worst:.1e}, {elapsed:.2?}", tables.len()))
}

fn c2_length_buckets() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut empty = 0;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let bag = if i % 10 == 0 {
            obfscan::dex::NameBag::new()
        } else {
            common::random_bag(&mut rng, 200)
        };
        let b = length_bucket_percentages(&bag);
        if bag.is_empty() {
            empty += 1;
            ensure!(b == [0.0; 5], "multiset {i}: empty group gives {b:?}");
        } else {
            let sum: f64 = b.iter().sum();
            ensure!((sum - 100.0).abs() <= 1e-6, "multiset {i}: sum {sum}");
            worst = worst.max((sum - 100.0).abs());
        }
    }
    Ok(format!("1000 multisets ({empty} empty), max |sum - 100| {worst:.1e}"))
}

fn c3_parser_round_trip() -> Outcome {
    let start = Instant::now();
    let mut profiles = Vec::new();
    for seed in 0..40 {
        profiles.push(GenerationProfile::natural(seed));
    }
    let styles = [
        ToolStyle::ProguardLike,
        ToolStyle::AllatoriLike,
        ToolStyle::DashoLike,
        ToolStyle::OtherLike,
    ];
    for (k, style) in styles.into_iter().enumerate() {
        for bits in 1u8..8 {
            let set: TechniqueSet = Technique::ALL
                .into_iter()
                .enumerate()
                .filter(|(b, _)| bits >> b & 1 == 1)
                .map(|(_, t)| t)
                .collect();
            for s in 0..3 {
                if let Ok(p) = GenerationProfile::preset(style, set, 500 + 100 * k as u64 + 10 * bits as u64 + s) {
                    profiles.push(p);
                }
            }
        }
    }
    let mut singles = 0;
    let mut valid = Vec::new();
    for p in &profiles {
        let (dex, declared) = generate_dex(p).map_err(|e| e.to_string())?;
        let got = symbols_from_bytes(&dex).map_err(|e| format!("generated DEX failed: {e}"))?;
        ensure!(got == declared, "extracted table differs from declared (seed {})", p.seed);
        singles += 1;
        valid.push(dex);
    }
    let mut multi = 0;
    for seed in 0..10 {
        let mut p = GenerationProfile::natural(900 + seed);
        p.dex_files = 2 + (seed as usize % 3);
        let app = generate_app(&p).map_err(|e| e.to_string())?;
        let apk = app.apk_bytes().map_err(|e| e.to_string())?;
        let got = symbols_from_bytes(&apk).map_err(|e| format!("generated APK failed: {e}"))?;
        ensure!(got == app.declared, "multidex APK {seed} differs from declared");
        multi += 1;
    }
    let mut mutants = 0;
    let mut kinds = HashSet::new();
    for (i, dex) in valid.iter().take(4).enumerate() {
        for (what, m) in common::dex_mutants(dex, 77 + i as u64, 50) {
            match parse_dex(&m) {
                Ok(_) => return Err(format!("mutant parsed: {what}")),
                Err(e) => {
                    kinds.insert(std::mem::discriminant(&e));
                }
            }
            ensure!(symbols_from_bytes(&m).is_err(), "mutant yielded symbols: {what}");
            mutants += 1;
        }
    }
    ensure!(mutants == 200, "only {mutants} mutants");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "{singles} DEX + {multi} multidex APKs round-trip, {mutants} mutants rejected ({} error kinds), {elapsed:.2?}",
        kinds.len()
    ))
}

fn c4_decision_rules() -> Outcome {
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let mut n = 0;
    let mut half = 0;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let p = [a, b, c];
                let tool = resolve_tool(&ToolProbs::new(p));
                ensure!(tool == common::oracle_tool(p), "tool rule disagrees at {p:?}: {tool:?}");
                let set = resolve_techniques(&TechniqueProbs::new(p));
                ensure!(set == common::oracle_techniques(p), "technique rule disagrees at {p:?}");
                if p.contains(&0.5) {
                    half += 1;
                }
                n += 1;
            }
        }
    }
    ensure!(n == 9261, "grid has {n} triples");
    Ok(format!("{n} triples, 0 disagreements ({half} with an exact 0.5)"))
}

fn distinct_rows(seed: u64) -> Vec<(FeatureVector, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..10).map(|i| (common::random_vector(&mut rng), i % 2 == 0)).collect()
}

fn c5_model_soundness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (k, hidden) in [vec![4], vec![8, 3], vec![32]].iter().enumerate() {
        let mut model = common::random_mlp(hidden, 50 + k as u64);
        for s in &mut model.feature_scaling {
            s.divisor = 100.0;
        }
        let rows: Vec<(FeatureVector, bool)> =
            (0..8).map(|_| (common::random_vector(&mut rng), rng.gen_bool(0.5))).collect();
        let e = common::max_gradient_error(&model, &rows);
        ensure!(e <= 1e-4, "hidden {hidden:?}: relative gradient error {e:.2e}");
        worst = worst.max(e);
    }

    let data = Dataset::new(distinct_rows(55), 55);
    let mlp_config = MlpConfig {
        seed: 55,
        ..MlpConfig::default()
    };
    let forest_config = ForestConfig {
        bootstrap_seed: 55,
        ..ForestConfig::default()
    };
    let mlp = train_mlp(&data, &mlp_config).map_err(|e| e.to_string())?;
    let forest = train_random_forest(&data, &forest_config).map_err(|e| e.to_string())?;
    let hits = |m: &dyn Fn(&FeatureVector) -> bool| data.rows.iter().filter(|(x, y)| m(x) == *y).count();
    let mlp_hits = hits(&|x| mlp.predict(x));
    let rf_hits = hits(&|x| forest.predict(x));
    ensure!(mlp_hits == 10, "MLP training accuracy {mlp_hits}/10");
    ensure!(rf_hits == 10, "forest training accuracy {rf_hits}/10");

    let mlp2 = train_mlp(&data, &mlp_config).map_err(|e| e.to_string())?;
    let forest2 = train_random_forest(&data, &forest_config).map_err(|e| e.to_string())?;
    ensure!(bytes(&mlp) == bytes(&mlp2), "MLP retraining differs");
    ensure!(bytes(&forest) == bytes(&forest2), "forest retraining differs");
    let rows = common::planted_feature_rows(60, 56);
    let mut config = BundleConfig::seeded(56);
    config.mlp.epochs = 100;
    config.forest.n_trees = 10;
    let b1 = train_bundle(&rows, &config).map_err(|e| e.to_string())?;
    let b2 = train_bundle(&rows, &config).map_err(|e| e.to_string())?;
    ensure!(bytes(&b1) == bytes(&b2), "bundle retraining differs");
    Ok(format!(
        "max gradient error {worst:.1e}, 10/10 training accuracy for MLP and forest, retraining bit-identical"
    ))
}

fn bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).unwrap()
}

/// Corpus, bundle and held-out rows shared by criteria 6, 8 and 9.
struct Pipeline {
    _dir: tempfile::TempDir,
    test_corpus: LabeledCorpus,
    test_rows: Vec<LabeledFeatures>,
    bundle: ModelBundle,
    bundle_path: PathBuf,
    train_apps: usize,
    elapsed: Duration,
}

fn pipeline() -> Result<Pipeline, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let train = build_labeled_corpus(&CorpusConfig::default(), 601, &dir.path().join("train"))
        .map_err(|e| e.to_string())?;
    let test = build_labeled_corpus(&CorpusConfig::default().scaled(0.4), 602, &dir.path().join("test"))
        .map_err(|e| e.to_string())?;
    let train_rows = extract_labeled_features(&train.labels, &train.dir).map_err(|e| e.to_string())?;
    let test_rows = extract_labeled_features(&test.labels, &test.dir).map_err(|e| e.to_string())?;
    let bundle = train_bundle(&train_rows, &BundleConfig::seeded(603)).map_err(|e| e.to_string())?;
    let bundle_path = dir.path().join("bundle.json");
    save_bundle(&bundle, &bundle_path).map_err(|e| e.to_string())?;
    Ok(Pipeline {
        train_apps: train.labels.len(),
        _dir: dir,
        test_corpus: test,
        test_rows,
        bundle,
        bundle_path,
        elapsed: start.elapsed(),
    })
}

fn c6_learnability(p: &Pipeline) -> Outcome {
    let start = Instant::now();
    ensure!(p.train_apps == 500, "train corpus has {} apps", p.train_apps);
    ensure!(p.test_rows.len() == 200, "test corpus has {} apps", p.test_rows.len());
    let eval = evaluate_bundle(&p.bundle, &p.test_rows);
    let det = eval.detector.accuracy();
    ensure!(det >= 0.95, "detector accuracy {det:.3}");
    let mut tool_line = Vec::new();
    for t in ToolLabel::CLASSIFIED {
        let f = eval.tools[&t].macro_f1();
        ensure!(f >= 0.90, "{} macro-F1 {f:.3}", t.name());
        tool_line.push(format!("{} {f:.3}", t.name()));
    }
    let mut tech_line = Vec::new();
    for t in Technique::ALL {
        let a = eval.techniques[&t].accuracy();
        ensure!(a >= 0.85, "{} accuracy {a:.3}", t.name());
        tech_line.push(format!("{} {a:.3}", t.name()));
    }
    let total = p.elapsed + start.elapsed();
    ensure!(total < Duration::from_secs(600), "pipeline took {total:?}");
    Ok(format!(
        "detector acc {det:.3}; tool macro-F1 {}; technique acc {}; {total:.1?}",
        tool_line.join(", "),
        tech_line.join(", ")
    ))
}

fn c7_report_reproduction() -> Outcome {
    let mut records = Vec::new();
    let mut push = |year: i32, n: usize, obf: usize, genre: &str| {
        for i in 0..n {
            let outcome = (i < obf).then(|| (ToolLabel::ALL[i % 4], techniques(["IR", "IR CF", "SE", "IR CF SE"][i % 4])));
            let id = format!("y{year}-{i:03}");
            let dev = format!("dev{:02}", (i * 7 + year as usize) % 23);
            records.push(planted(meta(&id, genre, &dev, (i as u64 * 7919) % 100_000, year), outcome));
        }
    };
    push(2016, 10, 5, "Tools");
    push(2023, 50, 33, "Games");
    let by_year = aggregate_by_year(&records);
    let y16 = by_year[&2016].obfuscated_pct;
    let y23 = by_year[&2023].obfuscated_pct;
    ensure!(y16 == 50.0, "2016 reported {y16}");
    ensure!(y23 == 66.0, "2023 reported {y23}");
    ensure!(by_year.len() == 2, "unexpected years {:?}", by_year.keys().collect::<Vec<_>>());

    let top_n = 10;
    let report = build_report(&records, &[10, 30], top_n).map_err(|e| e.to_string())?;
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_report(&report, a.path()).map_err(|e| e.to_string())?;
    emit_report(&report, b.path()).map_err(|e| e.to_string())?;
    let csv_a = fs::read(a.path().join("report_topk.csv")).map_err(|e| e.to_string())?;
    let csv_b = fs::read(b.path().join("report_topk.csv")).map_err(|e| e.to_string())?;
    ensure!(csv_a == csv_b, "top-k CSV differs between emits");
    let text = String::from_utf8(csv_a).map_err(|e| e.to_string())?;
    let header = text.lines().next().unwrap_or_default();
    let want = "top_k,total_apps,obfuscation_pct,proguard_pct,allatori_pct,dasho_pct,other_pct,ir_pct,cf_pct,se_pct";
    ensure!(header == want, "top-k header {header:?}");
    ensure!(text.lines().count() == 4, "top-k CSV has {} lines", text.lines().count());

    let devs = developer_buckets(&records, top_n).map_err(|e| e.to_string())?;
    let sum: usize = devs.buckets.iter().map(|b| b.developers).sum();
    ensure!(sum == top_n, "developer buckets sum to {sum}, want {top_n}");
    ensure!(devs.developers.len() == top_n, "{} developers ranked", devs.developers.len());
    Ok(format!("2016 {y16}%, 2023 {y23}%, top-k schema byte-stable, buckets sum to {sum}"))
}

fn scan_options(log: &Path, workers: usize) -> ScanOptions {
    ScanOptions {
        workers,
        ..ScanOptions::new(log)
    }
}

fn c8_early_stop(p: &Pipeline, work: &Path) -> Outcome {
    let corpus = &p.test_corpus;
    let out = scan_corpus(
        &corpus.dir.join(APK_DIR),
        &corpus.dir.join(MANIFEST_FILE),
        &p.bundle,
        &scan_options(&work.join("c8.jsonl"), 4),
    )
    .map_err(|e| e.to_string())?;
    ensure!(out.records.len() == corpus.metadata.len(), "{} records", out.records.len());
    let mut obf = 0;
    for r in &out.records {
        let a = &r.analysis;
        ensure!(!a.is_error(), "{} errored", a.apk_id);
        let present = [a.tool.is_some(), a.tool_probs.is_some(), a.techniques.is_some(), a.technique_probs.is_some()];
        match a.obfuscated {
            Some(true) => {
                obf += 1;
                ensure!(present.iter().all(|&b| b), "{}: obfuscated but fields missing", a.apk_id);
            }
            Some(false) => ensure!(present.iter().all(|&b| !b), "{}: clean but fields present", a.apk_id),
            None => return Err(format!("{}: undetermined", a.apk_id)),
        }
        ensure!(a.satisfies_early_stop(), "{}", a.apk_id);
    }
    Ok(format!("{} records ({obf} obfuscated) all satisfy the contract", out.records.len()))
}

fn line_set(path: &Path) -> Result<HashSet<String>, String> {
    Ok(fs::read_to_string(path)
        .map_err(|e| e.to_string())?
        .lines()
        .map(String::from)
        .collect())
}

fn c9_resumability(p: &Pipeline, work: &Path) -> Outcome {
    let corpus = &p.test_corpus;
    let apks = corpus.dir.join(APK_DIR);
    let manifest = corpus.dir.join(MANIFEST_FILE);
    let n = corpus.metadata.len();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let cold_log = work.join("c9-cold.jsonl");
    let cold_start = Instant::now();
    let cold = scan_corpus(&apks, &manifest, &p.bundle, &scan_options(&cold_log, 4)).map_err(|e| e.to_string())?;
    let cold_ms = cold_start.elapsed().as_millis().max(8) as u64;
    let cold_set = line_set(&cold_log)?;
    ensure!(cold_set.len() == n, "cold run logged {} lines", cold_set.len());

    // In-process interruption at a random record count, then a torn append.
    let stop = rng.gen_range(1..n);
    let warm_log = work.join("c9-warm.jsonl");
    let options = ScanOptions {
        stop_after: Some(stop),
        ..scan_options(&warm_log, 3)
    };
    let first = scan_corpus(&apks, &manifest, &p.bundle, &options).map_err(|e| e.to_string())?;
    ensure!(first.scanned == stop && !first.complete, "partial run scanned {}", first.scanned);
    let mut f = fs::OpenOptions::new().append(true).open(&warm_log).map_err(|e| e.to_string())?;
    std::io::Write::write_all(&mut f, b"{\"metadata\":{\"app_id\":\"com.torn").map_err(|e| e.to_string())?;
    drop(f);
    let second = scan_corpus(&apks, &manifest, &p.bundle, &scan_options(&warm_log, 2)).map_err(|e| e.to_string())?;
    ensure!(second.resumed == stop, "resumed {} of {stop}", second.resumed);
    ensure!(line_set(&warm_log)? == cold_set, "resumed log differs after stop at {stop}");
    ensure!(second.records == cold.records, "resumed records differ");

    // Out-of-process kill of the CLI after a random delay.
    let out_dir = work.join("c9-killed");
    let scan_cmd = || {
        let mut c = Command::new(env!("CARGO_BIN_EXE_obfscan"));
        c.args(["scan", "--workers", "2", "--apks"])
            .arg(&apks)
            .arg("--manifest")
            .arg(&manifest)
            .arg("--bundle")
            .arg(&p.bundle_path)
            .arg("--out")
            .arg(&out_dir)
            .stdout(Stdio::null())
            .stderr(Stdio::null());
        c
    };
    let killed_log = out_dir.join(obfscan::corpus::RECORD_LOG);
    let mut delay = Duration::from_millis(rng.gen_range(cold_ms / 4..cold_ms));
    let at_kill = loop {
        let _ = fs::remove_dir_all(&out_dir);
        let mut child = scan_cmd().spawn().map_err(|e| e.to_string())?;
        std::thread::sleep(delay);
        let _ = child.kill();
        child.wait().map_err(|e| e.to_string())?;
        let lines = fs::read_to_string(&killed_log).map(|s| s.lines().count()).unwrap_or(0);
        if lines < n || delay.as_millis() < 2 {
            break lines;
        }
        delay /= 2;
    };
    ensure!(at_kill < n, "CLI always finished before the kill");
    let status = scan_cmd().status().map_err(|e| e.to_string())?;
    ensure!(status.success(), "resumed CLI scan exited with {status}");
    ensure!(line_set(&killed_log)? == cold_set, "CLI log differs after kill at {delay:?}");
    ensure!(read_record_log(&killed_log).map_err(|e| e.to_string())?.len() == n, "CLI log has duplicates");
    Ok(format!(
        "stop after {stop}/{n} + torn tail, and CLI killed after {delay:?} ({at_kill} lines): both resume to the cold record set"
    ))
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    match result {
        Ok(detail) => {
            println!("criterion {n} ({name}): PASS ({detail})");
            true
        }
        Err(detail) => {
            println!("criterion {n} ({name}): FAIL ({detail})");
            false
        }
    }
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let mut ok = true;
    ok &= run(1, "feature-oracle equivalence", c1_feature_oracle);
    ok &= run(2, "length-bucket normalization", c2_length_buckets);
    ok &= run(3, "parser round-trip", c3_parser_round_trip);
    ok &= run(4, "decision-rule exhaustiveness", c4_decision_rules);
    ok &= run(5, "model soundness", c5_model_soundness);
    let work = tempfile::tempdir().expect("temp dir");
    let shared = panic::catch_unwind(pipeline).unwrap_or_else(|_| Err("pipeline panicked".into()));
    let with_pipeline = |n, name, f: &dyn Fn(&Pipeline) -> Outcome| match &shared {
        Ok(p) => run(n, name, || f(p)),
        Err(e) => run(n, name, || Err(format!("pipeline failed: {e}"))),
    };
    ok &= with_pipeline(6, "end-to-end learnability", &c6_learnability);
    ok &= run(7, "report reproduction", c7_report_reproduction);
    ok &= with_pipeline(8, "early-stop contract", &|p| c8_early_stop(p, work.path()));
    ok &= with_pipeline(9, "resumability", &|p| c9_resumability(p, work.path()));
    let _ = panic::take_hook();
    if !ok {
        std::process::exit(1);
    }
}
