use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AppMetadata;
use crate::dex::load_symbols;
use crate::features::compute_features;
use crate::labels::{AppLabel, Technique, TechniqueSet};
use crate::models::LabeledFeatures;

use super::generator::generate_app;
use super::profile::{GenerationProfile, InstructionMix, LengthWeights, StringProfile, ToolStyle};
use super::SynthError;

/// Optional per-cell replacements for preset profile fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverrides {
    pub n_classes: Option<usize>,
    pub n_methods_per_class: Option<usize>,
    pub n_fields_per_class: Option<usize>,
    pub n_strings_per_class: Option<usize>,
    pub instructions_per_method: Option<usize>,
    pub name_length_distribution: Option<LengthWeights>,
    pub special_char_rate: Option<f64>,
    pub numeric_rate: Option<f64>,
    pub special_chars: Option<String>,
    pub string_profile: Option<StringProfile>,
    pub instruction_mix: Option<InstructionMix>,
    pub junk_instruction_rate: Option<f64>,
}

impl ProfileOverrides {
    pub fn apply(&self, p: &mut GenerationProfile) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    p.$f = v.clone();
                }
            )*};
        }
        set!(
            n_classes,
            n_methods_per_class,
            n_fields_per_class,
            n_strings_per_class,
            instructions_per_method,
            name_length_distribution,
            special_char_rate,
            numeric_rate,
            special_chars,
            string_profile,
            instruction_mix,
            junk_instruction_rate
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub tool_style: ToolStyle,
    #[serde(default)]
    pub techniques: Vec<Technique>,
    pub count: usize,
    #[serde(default)]
    pub overrides: ProfileOverrides,
}

impl CellSpec {
    pub fn technique_set(&self) -> TechniqueSet {
        self.techniques.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataConfig {
    pub genres: Vec<String>,
    pub n_developers: usize,
    pub first_year: i32,
    pub last_year: i32,
}

impl Default for MetadataConfig {
    fn default() -> Self {
        MetadataConfig {
            genres: [
                "Casino", "Communication", "Education", "Finance", "Games", "Health", "Music",
                "Productivity", "Shopping", "Tools",
            ]
            .map(String::from)
            .to_vec(),
            n_developers: 60,
            first_year: 2016,
            last_year: 2023,
        }
    }
}

fn default_jitter() -> f64 {
    0.5
}

fn default_multidex_rate() -> f64 {
    0.2
}

/// Corpus recipe: app counts per (tool style, technique set) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub cells: BTreeMap<String, CellSpec>,
    /// Per-app size counts are scaled by a factor uniform in `[1-j, 1+j]`.
    #[serde(default = "default_jitter")]
    pub size_jitter: f64,
    /// Share of apps split over two DEX files.
    #[serde(default = "default_multidex_rate")]
    pub multidex_rate: f64,
    #[serde(default)]
    pub metadata: MetadataConfig,
}

impl Default for CorpusConfig {
    /// 500 apps covering every tool style and all seven non-empty technique
    /// combinations.
    fn default() -> Self {
        use Technique::*;
        let cell = |tool_style, techniques: &[Technique], count| CellSpec {
            tool_style,
            techniques: techniques.to_vec(),
            count,
            overrides: ProfileOverrides::default(),
        };
        let cells = [
            ("none", cell(ToolStyle::None, &[], 150)),
            ("proguard IR", cell(ToolStyle::ProguardLike, &[IR], 80)),
            ("allatori IR+CF+SE", cell(ToolStyle::AllatoriLike, &[IR, CF, SE], 70)),
            ("dasho IR+CF+SE", cell(ToolStyle::DashoLike, &[IR, CF, SE], 70)),
            ("other IR", cell(ToolStyle::OtherLike, &[IR], 25)),
            ("other IR+CF", cell(ToolStyle::OtherLike, &[IR, CF], 25)),
            ("other CF", cell(ToolStyle::OtherLike, &[CF], 20)),
            ("other SE", cell(ToolStyle::OtherLike, &[SE], 20)),
            ("other CF+SE", cell(ToolStyle::OtherLike, &[CF, SE], 20)),
            ("other IR+SE", cell(ToolStyle::OtherLike, &[IR, SE], 20)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        CorpusConfig {
            cells,
            size_jitter: default_jitter(),
            multidex_rate: default_multidex_rate(),
            metadata: MetadataConfig::default(),
        }
    }
}

impl CorpusConfig {
    /// Same recipe with every cell count multiplied by `factor` and rounded.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut c = self.clone();
        for cell in c.cells.values_mut() {
            cell.count = (cell.count as f64 * factor).round() as usize;
        }
        c
    }

    pub fn total_apps(&self) -> usize {
        self.cells.values().map(|c| c.count).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.cells.is_empty() {
            return Err(SynthError::EmptyConfig);
        }
        if !(0.0..1.0).contains(&self.size_jitter) || !(0.0..=1.0).contains(&self.multidex_rate) {
            return Err(SynthError::ProfileInfeasible(
                "size_jitter must be in [0,1) and multidex_rate in [0,1]".into(),
            ));
        }
        let m = &self.metadata;
        if m.genres.is_empty() || m.n_developers == 0 || m.first_year > m.last_year {
            return Err(SynthError::ProfileInfeasible(
                "metadata needs genres, developers and a year range".into(),
            ));
        }
        for (name, cell) in &self.cells {
            let mut p = GenerationProfile::preset(cell.tool_style, cell.technique_set(), 0)
                .map_err(|e| SynthError::ProfileInfeasible(format!("cell {name:?}: {e}")))?;
            cell.overrides.apply(&mut p);
            p.validate()
                .map_err(|e| SynthError::ProfileInfeasible(format!("cell {name:?}: {e}")))?;
        }
        Ok(())
    }
}

/// One row of `labels.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub app_id: String,
    /// APK path relative to the corpus directory.
    pub apk: String,
    pub cell: String,
    #[serde(flatten)]
    pub label: AppLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub dir: PathBuf,
    pub labels: Vec<LabelRecord>,
    pub metadata: Vec<AppMetadata>,
}

impl LabeledCorpus {
    pub fn apk_path(&self, record: &LabelRecord) -> PathBuf {
        self.dir.join(&record.apk)
    }
}

pub const APK_DIR: &str = "apks";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

const DOWNLOAD_TIERS: [u64; 15] = [
    100,
    500,
    1_000,
    5_000,
    10_000,
    50_000,
    100_000,
    500_000,
    1_000_000,
    5_000_000,
    10_000_000,
    50_000_000,
    100_000_000,
    500_000_000,
    1_000_000_000,
];

fn sample_metadata<R: Rng>(rng: &mut R, app_id: &str, m: &MetadataConfig) -> AppMetadata {
    // Squaring skews developer choice so a few developers publish many apps.
    let u: f64 = rng.gen();
    let dev = ((u * u) * m.n_developers as f64) as usize;
    let tier = rng.gen_range(0..DOWNLOAD_TIERS.len());
    let downloads = DOWNLOAD_TIERS[tier];
    AppMetadata {
        app_id: app_id.to_string(),
        genre: m.genres.choose(rng).cloned().unwrap_or_default(),
        developer: format!("Developer {:03}", dev.min(m.n_developers - 1)),
        downloads,
        avg_rating: f64::from(rng.gen_range(10..=50u32)) / 10.0,
        rating_count: (downloads as f64 * rng.gen_range(0.001..0.05)) as u64,
        last_update_year: rng.gen_range(m.first_year..=m.last_year),
    }
}

fn jitter<R: Rng>(rng: &mut R, n: usize, j: f64) -> usize {
    if j == 0.0 || n == 0 {
        return n;
    }
    ((n as f64 * rng.gen_range(1.0 - j..=1.0 + j)).round() as usize).max(1)
}

struct Planned {
    label: LabelRecord,
    profile: GenerationProfile,
}

/// Generates every app of `config` under `out`: `apks/<app_id>.apk`,
/// `labels.jsonl` and `manifest.jsonl`. Deterministic in `seed`.
pub fn build_labeled_corpus(
    config: &CorpusConfig,
    seed: u64,
    out: &Path,
) -> Result<LabeledCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::with_capacity(config.total_apps());
    let mut metadata = Vec::with_capacity(config.total_apps());
    for (cell_name, cell) in &config.cells {
        for _ in 0..cell.count {
            let app_id = format!("com.synth.app{:05}", plans.len());
            let techniques = cell.technique_set();
            let mut profile = GenerationProfile::preset(cell.tool_style, techniques, rng.gen())?;
            cell.overrides.apply(&mut profile);
            let j = config.size_jitter;
            profile.n_classes = jitter(&mut rng, profile.n_classes, j);
            profile.n_methods_per_class = jitter(&mut rng, profile.n_methods_per_class, j);
            profile.n_fields_per_class = jitter(&mut rng, profile.n_fields_per_class, j);
            profile.n_strings_per_class = jitter(&mut rng, profile.n_strings_per_class, j);
            profile.dex_files =
                if profile.n_classes >= 2 && rng.gen_bool(config.multidex_rate) { 2 } else { 1 };
            let label = match cell.tool_style.tool() {
                Some(tool) => AppLabel::obfuscated(tool, techniques),
                None => AppLabel::clean(),
            };
            metadata.push(sample_metadata(&mut rng, &app_id, &config.metadata));
            plans.push(Planned {
                label: LabelRecord {
                    apk: format!("{APK_DIR}/{app_id}.apk"),
                    app_id,
                    cell: cell_name.clone(),
                    label,
                },
                profile,
            });
        }
    }

    let apk_dir = out.join(APK_DIR);
    fs::create_dir_all(&apk_dir)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = plans.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = plans
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || -> Result<(), SynthError> {
                    for plan in part {
                        let app = generate_app(&plan.profile)?;
                        fs::write(out.join(&plan.label.apk), app.apk_bytes()?)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("generator thread panicked"))
    })?;

    let labels: Vec<LabelRecord> = plans.into_iter().map(|p| p.label).collect();
    write_jsonl(&out.join(LABELS_FILE), &labels)?;
    write_jsonl(&out.join(MANIFEST_FILE), &metadata)?;
    Ok(LabeledCorpus {
        dir: out.to_path_buf(),
        labels,
        metadata,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SynthError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, SynthError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line)?);
    }
    Ok(rows)
}

/// Extracts the feature vector of every labelled APK, resolving APK paths
/// against `apk_root`. Rows keep the order of `labels`.
pub fn extract_labeled_features(
    labels: &[LabelRecord],
    apk_root: &Path,
) -> Result<Vec<LabeledFeatures>, SynthError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = labels.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = labels
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || -> Result<Vec<LabeledFeatures>, SynthError> {
                    part.iter()
                        .map(|r| {
                            let path = apk_root.join(&r.apk);
                            let symbols = load_symbols(&path).map_err(|e| {
                                SynthError::Extraction(format!("{}: {e}", path.display()))
                            })?;
                            Ok(LabeledFeatures {
                                app_id: Some(r.app_id.clone()),
                                features: compute_features(&symbols),
                                label: r.label,
                            })
                        })
                        .collect()
                })
            })
            .collect();
        let mut rows = Vec::with_capacity(labels.len());
        for h in handles {
            rows.extend(h.join().expect("extraction thread panicked")?);
        }
        Ok(rows)
    })
}
