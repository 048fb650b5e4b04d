//! Three-stage decision: obfuscated at all, then which tool, then which
//! techniques. The later stages run only for apps judged obfuscated, and all
//! stages read the same feature vector.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dex::{load_symbols, SymbolTable};
use crate::features::{compute_features, FeatureCounts, FeatureVector};
use crate::labels::{TechniqueSet, ToolLabel};
use crate::models::ModelBundle;

pub use crate::labels::{AppLabel, Technique};

/// Cut-off shared by all three stages.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolProbs {
    #[serde(rename = "ProGuard")]
    pub proguard: f64,
    #[serde(rename = "Allatori")]
    pub allatori: f64,
    #[serde(rename = "DashO")]
    pub dasho: f64,
}

impl ToolProbs {
    pub fn new([proguard, allatori, dasho]: [f64; 3]) -> Self {
        ToolProbs {
            proguard,
            allatori,
            dasho,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.proguard, self.allatori, self.dasho]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechniqueProbs {
    #[serde(rename = "IR")]
    pub ir: f64,
    #[serde(rename = "CF")]
    pub cf: f64,
    #[serde(rename = "SE")]
    pub se: f64,
}

impl TechniqueProbs {
    pub fn new([ir, cf, se]: [f64; 3]) -> Self {
        TechniqueProbs { ir, cf, se }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.ir, self.cf, self.se]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: String,
    pub detail: String,
}

/// Outcome for one APK. `tool`, `tool_probs`, `techniques` and
/// `technique_probs` are present iff `obfuscated == Some(true)`. A record with
/// `error` set has `obfuscated` absent: the app is undetermined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub apk_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obfuscated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_obfuscated: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_probs: Option<ToolProbs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub techniques: Option<TechniqueSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub technique_probs: Option<TechniqueProbs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_stats: Option<FeatureCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
}

impl AnalysisRecord {
    pub fn error(apk_id: impl Into<String>, kind: impl Into<String>, detail: impl Into<String>) -> Self {
        AnalysisRecord {
            apk_id: apk_id.into(),
            obfuscated: None,
            p_obfuscated: None,
            tool: None,
            tool_probs: None,
            techniques: None,
            technique_probs: None,
            extraction_stats: None,
            error: Some(RecordError {
                kind: kind.into(),
                detail: detail.into(),
            }),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    /// Tool and technique fields are all present when obfuscated and all
    /// absent otherwise.
    pub fn satisfies_early_stop(&self) -> bool {
        let fields = [
            self.tool.is_some(),
            self.tool_probs.is_some(),
            self.techniques.is_some(),
            self.technique_probs.is_some(),
        ];
        if self.obfuscated == Some(true) {
            fields.iter().all(|&b| b)
        } else {
            fields.iter().all(|&b| !b)
        }
    }
}

/// `p >= 0.5` counts as obfuscated.
pub fn is_obfuscated(p: f64) -> bool {
    p >= THRESHOLD
}

pub fn detect_obfuscation(bundle: &ModelBundle, fv: &FeatureVector) -> (bool, f64) {
    let p = bundle.p_obfuscated(fv);
    (is_obfuscated(p), p)
}

/// `Other` when every probability is below 0.5, else the most probable tool
/// with ties going to ProGuard, then Allatori, then DashO.
pub fn resolve_tool(probs: &ToolProbs) -> ToolLabel {
    let p = probs.as_array();
    let mut best = 0;
    for i in 1..3 {
        if p[i] > p[best] {
            best = i;
        }
    }
    if p[best] < THRESHOLD {
        ToolLabel::Other
    } else {
        ToolLabel::CLASSIFIED[best]
    }
}

/// A technique is reported when its probability is strictly above 0.5.
pub fn resolve_techniques(probs: &TechniqueProbs) -> TechniqueSet {
    let [ir, cf, se] = probs.as_array().map(|p| p > THRESHOLD);
    TechniqueSet { ir, cf, se }
}

/// Decision record for an already-computed feature vector.
pub fn analyze_features(
    bundle: &ModelBundle,
    fv: &FeatureVector,
    counts: FeatureCounts,
    apk_id: &str,
) -> AnalysisRecord {
    let (obfuscated, p) = detect_obfuscation(bundle, fv);
    let mut record = AnalysisRecord {
        apk_id: apk_id.to_string(),
        obfuscated: Some(obfuscated),
        p_obfuscated: Some(p),
        tool: None,
        tool_probs: None,
        techniques: None,
        technique_probs: None,
        extraction_stats: Some(counts),
        error: None,
    };
    if obfuscated {
        let tool_probs = ToolProbs::new(bundle.tool_probs(fv));
        let technique_probs = TechniqueProbs::new(bundle.technique_probs(fv));
        record.tool = Some(resolve_tool(&tool_probs));
        record.tool_probs = Some(tool_probs);
        record.techniques = Some(resolve_techniques(&technique_probs));
        record.technique_probs = Some(technique_probs);
    }
    record
}

pub fn analyze(bundle: &ModelBundle, symbols: &SymbolTable, apk_id: &str) -> AnalysisRecord {
    analyze_features(bundle, &compute_features(symbols), FeatureCounts::of(symbols), apk_id)
}

/// Loads and analyses the APK at `path`. Extraction failures become an
/// error-tagged record.
pub fn analyze_path(bundle: &ModelBundle, path: &Path, apk_id: &str) -> AnalysisRecord {
    match load_symbols(path) {
        Ok(symbols) => analyze(bundle, &symbols, apk_id),
        Err(e) => AnalysisRecord::error(apk_id, e.kind(), e.to_string()),
    }
}
