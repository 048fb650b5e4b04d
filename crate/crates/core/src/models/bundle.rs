use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{feature_contract_hash, FeatureVector};
use crate::labels::{Technique, ToolLabel};

use super::{
    grid_search, train_mlp, train_random_forest, Dataset, ForestConfig, LabeledFeatures,
    MlpConfig, MlpModel, ModelError, RandomForestModel,
};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolClassifiers {
    #[serde(rename = "ProGuard")]
    pub proguard: RandomForestModel,
    #[serde(rename = "Allatori")]
    pub allatori: RandomForestModel,
    #[serde(rename = "DashO")]
    pub dasho: RandomForestModel,
}

impl ToolClassifiers {
    pub fn get(&self, tool: ToolLabel) -> Option<&RandomForestModel> {
        match tool {
            ToolLabel::ProGuard => Some(&self.proguard),
            ToolLabel::Allatori => Some(&self.allatori),
            ToolLabel::DashO => Some(&self.dasho),
            ToolLabel::Other => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechniqueClassifiers {
    #[serde(rename = "IR")]
    pub ir: RandomForestModel,
    #[serde(rename = "CF")]
    pub cf: RandomForestModel,
    #[serde(rename = "SE")]
    pub se: RandomForestModel,
}

impl TechniqueClassifiers {
    pub fn get(&self, t: Technique) -> &RandomForestModel {
        match t {
            Technique::IR => &self.ir,
            Technique::CF => &self.cf,
            Technique::SE => &self.se,
        }
    }
}

/// The seven trained models plus the feature contract they were trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format_version: u32,
    pub feature_contract_hash: String,
    pub obfuscation_detector: MlpModel,
    pub tool_classifiers: ToolClassifiers,
    pub technique_classifiers: TechniqueClassifiers,
}

impl ModelBundle {
    pub fn p_obfuscated(&self, x: &FeatureVector) -> f64 {
        self.obfuscation_detector.predict_proba(x)
    }

    /// ProGuard, Allatori and DashO probabilities, in that order.
    pub fn tool_probs(&self, x: &FeatureVector) -> [f64; 3] {
        let t = &self.tool_classifiers;
        [t.proguard.predict_proba(x), t.allatori.predict_proba(x), t.dasho.predict_proba(x)]
    }

    /// IR, CF and SE probabilities, in that order.
    pub fn technique_probs(&self, x: &FeatureVector) -> [f64; 3] {
        Technique::ALL.map(|t| self.technique_classifiers.get(t).predict_proba(x))
    }

    fn validate(&self) -> Result<(), String> {
        self.obfuscation_detector
            .validate()
            .map_err(|e| format!("obfuscation_detector: {e}"))?;
        for tool in ToolLabel::CLASSIFIED {
            if let Some(m) = self.tool_classifiers.get(tool) {
                m.validate().map_err(|e| format!("tool_classifiers.{tool}: {e}"))?;
            }
        }
        for t in Technique::ALL {
            self.technique_classifiers
                .get(t)
                .validate()
                .map_err(|e| format!("technique_classifiers.{t}: {e}"))?;
        }
        Ok(())
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), ModelError> {
    let bytes = serde_json::to_vec(bundle).map_err(|e| ModelError::CorruptBundle(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Loads and checks a bundle. The version is checked before the contract
/// hash, and both before the models are decoded.
pub fn load_bundle(path: &Path) -> Result<ModelBundle, ModelError> {
    let bytes = fs::read(path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| ModelError::CorruptBundle(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ModelError::CorruptBundle("missing format_version".into()))?;
    if version != u64::from(BUNDLE_FORMAT_VERSION) {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: BUNDLE_FORMAT_VERSION,
        });
    }
    let expected = feature_contract_hash();
    let found = value
        .get("feature_contract_hash")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| ModelError::CorruptBundle("missing feature_contract_hash".into()))?;
    if found != expected {
        return Err(ModelError::ContractMismatch {
            found: found.to_string(),
            expected,
        });
    }
    let bundle: ModelBundle =
        serde_json::from_value(value).map_err(|e| ModelError::CorruptBundle(e.to_string()))?;
    bundle.validate().map_err(ModelError::CorruptBundle)?;
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub mlp: MlpConfig,
    pub forest: ForestConfig,
    /// When non-empty, the detector's hyperparameters are chosen from these
    /// points by grid search and `mlp` is ignored.
    #[serde(default)]
    pub mlp_grid: Vec<MlpConfig>,
    /// Same for every forest.
    #[serde(default)]
    pub forest_grid: Vec<ForestConfig>,
    pub folds: usize,
    pub split_seed: u64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig {
            mlp: MlpConfig::default(),
            forest: ForestConfig::default(),
            mlp_grid: Vec::new(),
            forest_grid: Vec::new(),
            folds: 3,
            split_seed: 0,
        }
    }
}

impl BundleConfig {
    /// Defaults with every seed set to `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut c = BundleConfig::default();
        c.mlp.seed = seed;
        c.forest.bootstrap_seed = seed;
        c.split_seed = seed;
        c
    }

    /// Adds the standard search grids: hidden width {16, 32, 64} x learning
    /// rate {0.01, 0.003}; forest depth {6, 12, 20} x min leaf {1, 2}.
    pub fn with_default_grids(mut self) -> Self {
        self.mlp_grid = [16, 32, 64]
            .into_iter()
            .flat_map(|h| {
                let base = self.mlp.clone();
                [0.01, 0.003].map(move |lr| MlpConfig {
                    hidden_layers: vec![h],
                    learning_rate: lr,
                    ..base.clone()
                })
            })
            .collect();
        self.forest_grid = [6, 12, 20]
            .into_iter()
            .flat_map(|d| {
                let base = self.forest.clone();
                [1, 2].map(move |msl| ForestConfig {
                    max_depth: d,
                    min_samples_leaf: msl,
                    ..base.clone()
                })
            })
            .collect();
        self
    }
}

fn pick<H: super::Trainable>(data: &Dataset, default: &H, grid: &[H], folds: usize) -> Result<H, ModelError> {
    if grid.is_empty() {
        Ok(default.clone())
    } else {
        Ok(grid_search(data, grid, folds)?.best)
    }
}

/// Trains all seven models. The detector sees every row; tool and technique
/// classifiers see obfuscated rows only, each as one-vs-other.
pub fn train_bundle(rows: &[LabeledFeatures], config: &BundleConfig) -> Result<ModelBundle, ModelError> {
    for (i, r) in rows.iter().enumerate() {
        if r.label.obfuscated && (r.label.tool.is_none() || r.label.techniques.is_none()) {
            return Err(ModelError::InvalidLabel(format!(
                "row {i}: obfuscated without tool/techniques"
            )));
        }
    }
    let detector_data = Dataset::new(
        rows.iter().map(|r| (r.features, r.label.obfuscated)).collect(),
        config.split_seed,
    );
    let mlp_config = pick(&detector_data, &config.mlp, &config.mlp_grid, config.folds)?;
    let obfuscation_detector = train_mlp(&detector_data, &mlp_config)?;

    let obfuscated: Vec<&LabeledFeatures> = rows.iter().filter(|r| r.label.obfuscated).collect();
    let forest_for = |positive: &dyn Fn(&LabeledFeatures) -> bool| -> Result<RandomForestModel, ModelError> {
        let data = Dataset::new(
            obfuscated.iter().map(|r| (r.features, positive(r))).collect(),
            config.split_seed,
        );
        let cfg = pick(&data, &config.forest, &config.forest_grid, config.folds)?;
        train_random_forest(&data, &cfg)
    };
    let tool = |t: ToolLabel| move |r: &LabeledFeatures| r.label.tool == Some(t);
    let technique =
        |t: Technique| move |r: &LabeledFeatures| r.label.techniques.is_some_and(|s| s.contains(t));

    Ok(ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        feature_contract_hash: feature_contract_hash(),
        obfuscation_detector,
        tool_classifiers: ToolClassifiers {
            proguard: forest_for(&tool(ToolLabel::ProGuard))?,
            allatori: forest_for(&tool(ToolLabel::Allatori))?,
            dasho: forest_for(&tool(ToolLabel::DashO))?,
        },
        technique_classifiers: TechniqueClassifiers {
            ir: forest_for(&technique(Technique::IR))?,
            cf: forest_for(&technique(Technique::CF))?,
            se: forest_for(&technique(Technique::SE))?,
        },
    })
}
