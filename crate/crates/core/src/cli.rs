//! The `obfscan` command line. [`run`] parses arguments, dispatches to the
//! library and maps failures to exit codes: 0 success, 1 usage error, 2 input
//! or data error, 3 internal error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{build_report, emit_report, read_record_log, scan_corpus, ScanOptions, RECORD_LOG};
use crate::detector::analyze_path;
use crate::dex::load_symbols;
use crate::features::{compute_features, FeatureCounts, FeatureVector};
use crate::models::{
    load_bundle, read_labeled_features, save_bundle, train_bundle, write_labeled_features,
    BundleConfig,
};
use crate::synth::{build_labeled_corpus, extract_labeled_features, read_labels, CorpusConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "obfscan", version, about = "Detect obfuscation tools and techniques in Android APKs")]
pub struct Cli {
    /// Log verbosity on standard error: off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the 37 feature percentages of one APK, or of every APK in a
    /// labels manifest.
    Features(FeaturesArgs),
    /// Train the detector, tool and technique models from labelled features.
    Train(TrainArgs),
    /// Analyse one APK and print its analysis record as JSON.
    Predict(PredictArgs),
    /// Analyse every app of a manifest, appending to DIR/records.jsonl.
    /// Rerunning resumes where an interrupted scan stopped.
    Scan(ScanArgs),
    /// Aggregate a record log into year, genre, developer and top-k reports.
    Report(ReportArgs),
    /// Generate a labelled synthetic APK corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// APK (or bare DEX) to analyse; prints {apk, features, counts}.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    pub apk: Option<PathBuf>,
    /// labels.jsonl of a synthetic corpus; writes labelled feature rows.
    #[arg(long, requires = "out")]
    pub labels: Option<PathBuf>,
    /// Directory the APK paths in --labels are relative to [default: the
    /// directory holding the labels file].
    #[arg(long, requires = "labels")]
    pub apks: Option<PathBuf>,
    /// Output file; standard output when omitted with --apk.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled feature JSONL: {"features": [37 numbers], "label": {...}} per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the model bundle.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for weight initialisation, bootstrap samples and folds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pick hyperparameters by k-fold grid search: MLP hidden width
    /// {16, 32, 64} x learning rate {0.01, 0.003}; forest max depth
    /// {6, 12, 20} x min samples per leaf {1, 2}.
    #[arg(long)]
    pub grid: bool,
    /// Folds used by --grid.
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// JSON hyperparameter file (BundleConfig); overrides the defaults
    /// (MLP: 1x32 hidden, 500 epochs, lr 0.01, batch 32; forest: 100 trees,
    /// depth 12, min leaf 2).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub apk: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Identifier recorded as apk_id [default: APK file stem].
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Directory holding <app_id>.apk files.
    #[arg(long)]
    pub apks: PathBuf,
    /// JSONL of AppMetadata rows.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory; the record log is DIR/records.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Stop after appending N new records (simulates an interrupted run).
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Record log written by `scan`.
    #[arg(long)]
    pub records: PathBuf,
    /// Output directory for report_*.csv/json.
    #[arg(long)]
    pub out: PathBuf,
    /// Ascending comma-separated prefix sizes.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub top_k: Vec<usize>,
    /// Number of developers ranked into obfuscation buckets.
    #[arg(long, default_value_t = 100)]
    pub top_devs: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// CorpusConfig JSON (cells of tool_style, techniques, count, overrides)
    /// [default: built-in 500-app recipe].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiply every cell count by this factor.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn data(message: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            message: message.to_string(),
        }
    }
}

type CliResult = Result<(), CliError>;

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("{what} {} does not exist or is not a file", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::data(format!("{what} {} does not exist or is not a directory", path.display())))
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(CliError::internal)?;
    out.write_all(b"\n").map_err(CliError::internal)?;
    Ok(())
}

#[derive(Serialize)]
struct FeatureOutput<'a> {
    apk: &'a str,
    features: FeatureVector,
    counts: FeatureCounts,
}

fn cmd_features(args: &FeaturesArgs) -> CliResult {
    if let Some(apk) = &args.apk {
        require_file(apk, "APK")?;
        let symbols = load_symbols(apk).map_err(|e| CliError::data(format!("{}: {e}", apk.display())))?;
        let shown = apk.display().to_string();
        let output = FeatureOutput {
            apk: &shown,
            features: compute_features(&symbols),
            counts: FeatureCounts::of(&symbols),
        };
        return match &args.out {
            Some(out) => {
                let mut bytes = serde_json::to_vec(&output).map_err(CliError::internal)?;
                bytes.push(b'\n');
                fs::write(out, bytes).map_err(|e| CliError::data(format!("{}: {e}", out.display())))
            }
            None => print_json(&output),
        };
    }
    let labels_path = args.labels.as_ref().expect("clap enforces --apk or --labels");
    let out = args.out.as_ref().expect("clap enforces --out with --labels");
    require_file(labels_path, "labels file")?;
    let root = match &args.apks {
        Some(dir) => dir.clone(),
        None => labels_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    require_dir(&root, "APK root")?;
    let labels = read_labels(labels_path).map_err(CliError::data)?;
    let rows = extract_labeled_features(&labels, &root).map_err(CliError::data)?;
    write_labeled_features(out, &rows).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    log::info!("wrote {} labelled feature rows to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    require_file(&args.data, "training data")?;
    let mut config = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            let text = fs::read_to_string(path).map_err(CliError::data)?;
            serde_json::from_str::<BundleConfig>(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => BundleConfig::seeded(args.seed),
    };
    if args.grid {
        config = config.with_default_grids();
    }
    config.folds = args.folds;
    let rows = read_labeled_features(&args.data).map_err(|e| CliError::data(format!("{}: {e}", args.data.display())))?;
    let bundle = train_bundle(&rows, &config).map_err(CliError::data)?;
    save_bundle(&bundle, &args.out).map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    log::info!("trained on {} rows; bundle written to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CliResult {
    require_file(&args.apk, "APK")?;
    require_file(&args.bundle, "bundle")?;
    let bundle = load_bundle(&args.bundle).map_err(|e| CliError::data(format!("{}: {e}", args.bundle.display())))?;
    let id = args.id.clone().unwrap_or_else(|| {
        args.apk
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let record = analyze_path(&bundle, &args.apk, &id);
    print_json(&record)?;
    match &record.error {
        Some(e) => Err(CliError::data(format!("{}: {}", args.apk.display(), e.detail))),
        None => Ok(()),
    }
}

fn cmd_scan(args: &ScanArgs) -> CliResult {
    require_dir(&args.apks, "APK directory")?;
    require_file(&args.manifest, "manifest")?;
    require_file(&args.bundle, "bundle")?;
    if args.workers == 0 {
        return Err(CliError {
            code: EXIT_USAGE,
            message: "--workers must be at least 1".into(),
        });
    }
    let bundle = load_bundle(&args.bundle).map_err(|e| CliError::data(format!("{}: {e}", args.bundle.display())))?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::data(format!("{}: {e}", args.out.display())))?;
    let options = ScanOptions {
        workers: args.workers,
        log_path: args.out.join(RECORD_LOG),
        stop_after: args.stop_after,
    };
    let outcome = scan_corpus(&args.apks, &args.manifest, &bundle, &options).map_err(CliError::data)?;
    let errors = outcome.records.iter().filter(|r| r.analysis.is_error()).count();
    log::info!(
        "{} records ({} resumed, {} scanned, {} error-tagged){}",
        outcome.records.len(),
        outcome.resumed,
        outcome.scanned,
        errors,
        if outcome.complete { "" } else { "; scan incomplete" }
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> CliResult {
    require_file(&args.records, "record log")?;
    let records = read_record_log(&args.records).map_err(CliError::data)?;
    let report = build_report(&records, &args.top_k, args.top_devs).map_err(CliError::data)?;
    emit_report(&report, &args.out).map_err(CliError::data)?;
    log::info!("reports for {} records written to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let mut config = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            let text = fs::read_to_string(path).map_err(CliError::data)?;
            serde_json::from_str::<CorpusConfig>(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        }
        None => CorpusConfig::default(),
    };
    if let Some(f) = args.scale {
        if !(f.is_finite() && f > 0.0) {
            return Err(CliError {
                code: EXIT_USAGE,
                message: "--scale must be positive".into(),
            });
        }
        config = config.scaled(f);
    }
    let corpus = build_labeled_corpus(&config, args.seed, &args.out).map_err(CliError::data)?;
    log::info!("generated {} apps under {}", corpus.labels.len(), args.out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            // clap routes help to stdout and usage errors to stderr.
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level)
        .target(env_logger::Target::Stderr)
        .try_init();

    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message);
            e.code
        }
        Err(panic) => {
            let cause = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            eprintln!("error: internal failure: {cause}");
            EXIT_INTERNAL
        }
    }
}
