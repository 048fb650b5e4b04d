use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::labels::AppLabel;

use super::ModelError;

/// One row of a labelled feature file (`train` input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_id: Option<String>,
    pub features: FeatureVector,
    pub label: AppLabel,
}

pub fn write_labeled_features(path: &Path, rows: &[LabeledFeatures]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads a JSONL labelled feature file. Malformed lines are reported with
/// their 1-based line number.
pub fn read_labeled_features(path: &Path) -> Result<Vec<LabeledFeatures>, ModelError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: LabeledFeatures = serde_json::from_str(&line)
            .map_err(|e| ModelError::InvalidLabel(format!("line {}: {e}", i + 1)))?;
        row.label_checked()
            .map_err(|e| ModelError::InvalidLabel(format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

impl LabeledFeatures {
    fn label_checked(&self) -> Result<(), String> {
        let l = &self.label;
        if l.obfuscated && (l.tool.is_none() || l.techniques.is_none()) {
            return Err("obfuscated rows need tool and techniques".into());
        }
        if !l.obfuscated && (l.tool.is_some() || l.techniques.is_some()) {
            return Err("clean rows must not carry tool or techniques".into());
        }
        Ok(())
    }
}

/// Binary training data for one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<(FeatureVector, bool)>,
    /// Seeds fold assignment and train/test splits.
    pub split_seed: u64,
}

impl Dataset {
    pub fn new(rows: Vec<(FeatureVector, bool)>, split_seed: u64) -> Self {
        Dataset { rows, split_seed }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|(_, y)| *y).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Fails unless both classes are present.
    pub fn check_two_classes(&self) -> Result<(), ModelError> {
        let (pos, neg) = (self.positives(), self.negatives());
        if pos == 0 || neg == 0 {
            return Err(ModelError::DegenerateDataset(format!(
                "{pos} positive and {neg} negative rows; both classes are required"
            )));
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
            split_seed: self.split_seed,
        }
    }

    /// Row indices of each fold. Classes are shuffled separately and dealt
    /// round-robin, so every fold sees both classes in proportion.
    pub fn stratified_folds(&self, k: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.split_seed);
        let k = k.max(1);
        let mut folds = vec![Vec::new(); k];
        let mut slot = 0;
        for class in [true, false] {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.rows[i].1 == class).collect();
            idx.shuffle(&mut rng);
            for i in idx {
                folds[slot % k].push(i);
                slot += 1;
            }
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        folds
    }

    /// Stratified split into (train, test) with `test_fraction` of each class
    /// held out.
    pub fn stratified_split(&self, test_fraction: f64) -> (Dataset, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.split_seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for class in [true, false] {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.rows[i].1 == class).collect();
            idx.shuffle(&mut rng);
            let n_test = (idx.len() as f64 * test_fraction).round() as usize;
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (self.subset(&train), self.subset(&test))
    }
}
