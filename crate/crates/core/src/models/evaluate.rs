use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::labels::{Technique, ToolLabel};

use super::{BinaryClassifier, BinaryMetrics, LabeledFeatures, ModelBundle};

/// Held-out scores of every model in a bundle. Tool and technique models are
/// scored on truly obfuscated rows only, matching how they are trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEvaluation {
    pub detector: BinaryMetrics,
    pub tools: BTreeMap<ToolLabel, BinaryMetrics>,
    pub techniques: BTreeMap<Technique, BinaryMetrics>,
}

pub fn evaluate_bundle(bundle: &ModelBundle, rows: &[LabeledFeatures]) -> BundleEvaluation {
    let det = &bundle.obfuscation_detector;
    let detector = BinaryMetrics::from_pairs(rows.iter().map(|r| (det.predict(&r.features), r.label.obfuscated)));
    let obfuscated: Vec<&LabeledFeatures> = rows.iter().filter(|r| r.label.obfuscated).collect();
    let tools = ToolLabel::CLASSIFIED
        .iter()
        .filter_map(|&t| {
            let model = bundle.tool_classifiers.get(t)?;
            let m = BinaryMetrics::from_pairs(
                obfuscated.iter().map(|r| (model.predict(&r.features), r.label.tool == Some(t))),
            );
            Some((t, m))
        })
        .collect();
    let techniques = Technique::ALL
        .iter()
        .map(|&t| {
            let model = bundle.technique_classifiers.get(t);
            let m = BinaryMetrics::from_pairs(obfuscated.iter().map(|r| {
                (model.predict(&r.features), r.label.techniques.is_some_and(|s| s.contains(t)))
            }));
            (t, m)
        })
        .collect();
    BundleEvaluation {
        detector,
        tools,
        techniques,
    }
}
