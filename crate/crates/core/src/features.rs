//! The 37-dimensional APK feature vector.
//!
//! All values are percentages in `[0, 100]`. The layout is the model input
//! contract and must not change without bumping [`FEATURE_CONTRACT`]:
//!
//! | index (0-based) | population     | meaning                                        |
//! |-----------------|----------------|------------------------------------------------|
//! | 0..5            | class names    | length 1, 2, 3, 4, >4                          |
//! | 5..8            | class names    | contains special char, digit, both             |
//! | 8..13           | method names   | length buckets                                 |
//! | 13..16          | method names   | special / digit / both                         |
//! | 16..21          | field names    | length buckets                                 |
//! | 21..24          | field names    | special / digit / both                         |
//! | 24..29          | other strings  | length buckets                                 |
//! | 29..32          | other strings  | special / digit / both                         |
//! | 32..37          | instructions   | nop, goto, invoke, if, move                    |

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dex::{NameBag, OpcodeFamily, OpcodeHistogram, SymbolTable};

pub const FEATURE_COUNT: usize = 37;

/// Human-readable definition of the feature layout. Model bundles record its
/// SHA-256 and refuse to load against a different definition.
pub const FEATURE_CONTRACT: &str = "\
obfscan feature contract v1
vector: 37 float64 percentages in [0,100]; zero denominator => all dependent values 0
groups in order: class_names, method_names, field_names, other_strings; each contributes
  5 length buckets (len==1, ==2, ==3, ==4, >4; length in unicode scalar values)
  3 character classes (contains special, contains digit, contains both; overlapping)
  special = any scalar outside [A-Za-z0-9]; digit = [0-9]
class name = descriptor segment after the last '/', 'L' and ';' stripped, '$' kept
class/method/field names only from classes defined in the DEX; <init>/<clinit> skipped
other_strings = string pool minus type descriptors, proto shorties, method and field names
instructions last: nop, goto, invoke, if, move as percent of all decoded instructions
  nop=00 goto=28..2a if=32..3d move=01..0d invoke=6e..72,74..78,fa..fd; payloads not counted
multidex: symbol tables merged across classes*.dex before computing percentages
";

/// Hex SHA-256 of [`FEATURE_CONTRACT`].
pub fn feature_contract_hash() -> String {
    let digest = Sha256::digest(FEATURE_CONTRACT.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureVectorError {
    #[error("expected {FEATURE_COUNT} values, got {0}")]
    WrongLength(usize),
    #[error("value {value} at index {index} is outside [0, 100]")]
    OutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector([f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; FEATURE_COUNT])
    }

    /// Wraps `values`, checking every entry is a finite percentage.
    pub fn new(values: [f64; FEATURE_COUNT]) -> Result<Self, FeatureVectorError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=100.0).contains(&value) {
                return Err(FeatureVectorError::OutOfRange { index, value });
            }
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = FeatureVectorError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let values: [f64; FEATURE_COUNT] = v
            .try_into()
            .map_err(|v: Vec<f64>| FeatureVectorError::WrongLength(v.len()))?;
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0.to_vec()
    }
}

/// Denominators behind each feature group, kept for auditing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCounts {
    pub class_names: u64,
    pub method_names: u64,
    pub field_names: u64,
    pub other_strings: u64,
    pub instructions: u64,
}

impl FeatureCounts {
    pub fn of(symbols: &SymbolTable) -> Self {
        FeatureCounts {
            class_names: symbols.class_names.len(),
            method_names: symbols.method_names.len(),
            field_names: symbols.field_names.len(),
            other_strings: symbols.other_strings.len(),
            instructions: symbols.total_instructions,
        }
    }
}

fn percent(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64 * 100.0
    }
}

/// Share of names of length 1, 2, 3, 4 and more than 4.
pub fn length_bucket_percentages(names: &NameBag) -> [f64; 5] {
    let mut buckets = [0u64; 5];
    for (name, n) in names.iter() {
        let len = name.chars().count();
        let bucket = len.clamp(1, 5) - 1;
        buckets[bucket] += n;
    }
    let total = names.len();
    buckets.map(|c| percent(c, total))
}

pub fn is_special_char(c: char) -> bool {
    !c.is_ascii_alphanumeric()
}

/// Share of names containing a special character, a digit, and both. The
/// three categories overlap.
pub fn character_class_percentages(names: &NameBag) -> [f64; 3] {
    let (mut special, mut numeric, mut both) = (0u64, 0u64, 0u64);
    for (name, n) in names.iter() {
        let has_special = name.chars().any(is_special_char);
        let has_digit = name.chars().any(|c| c.is_ascii_digit());
        if has_special {
            special += n;
        }
        if has_digit {
            numeric += n;
        }
        if has_special && has_digit {
            both += n;
        }
    }
    let total = names.len();
    [percent(special, total), percent(numeric, total), percent(both, total)]
}

/// Share of nop, goto, invoke, if and move instructions among all decoded
/// instructions.
pub fn instruction_percentages(counts: &OpcodeHistogram, total_instructions: u64) -> [f64; 5] {
    OpcodeFamily::ALL.map(|f| percent(counts.get(f), total_instructions))
}

pub fn compute_features(symbols: &SymbolTable) -> FeatureVector {
    let mut values = [0.0; FEATURE_COUNT];
    let groups = [
        &symbols.class_names,
        &symbols.method_names,
        &symbols.field_names,
        &symbols.other_strings,
    ];
    for (g, names) in groups.into_iter().enumerate() {
        let base = g * 8;
        values[base..base + 5].copy_from_slice(&length_bucket_percentages(names));
        values[base + 5..base + 8].copy_from_slice(&character_class_percentages(names));
    }
    values[32..].copy_from_slice(&instruction_percentages(
        &symbols.opcode_counts,
        symbols.total_instructions,
    ));
    FeatureVector(values)
}

/// Column names in vector order, e.g. `class_len_1`, `method_special`,
/// `ins_goto`.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for group in ["class", "method", "field", "string"] {
        for suffix in ["len_1", "len_2", "len_3", "len_4", "len_gt4", "special", "numeric", "both"] {
            names.push(format!("{group}_{suffix}"));
        }
    }
    for family in OpcodeFamily::ALL {
        names.push(format!("ins_{}", family.name()));
    }
    names
}
