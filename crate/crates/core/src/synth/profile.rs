use serde::{Deserialize, Serialize};

use crate::labels::{Technique, TechniqueSet, ToolLabel};

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToolStyle {
    ProguardLike,
    AllatoriLike,
    DashoLike,
    OtherLike,
    None,
}

impl ToolStyle {
    pub const ALL: [ToolStyle; 5] = [
        ToolStyle::None,
        ToolStyle::ProguardLike,
        ToolStyle::AllatoriLike,
        ToolStyle::DashoLike,
        ToolStyle::OtherLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToolStyle::ProguardLike => "proguard-like",
            ToolStyle::AllatoriLike => "allatori-like",
            ToolStyle::DashoLike => "dasho-like",
            ToolStyle::OtherLike => "other-like",
            ToolStyle::None => "none",
        }
    }

    /// Ground-truth tool for apps of this style; `None` for clean apps.
    pub fn tool(self) -> Option<ToolLabel> {
        match self {
            ToolStyle::ProguardLike => Some(ToolLabel::ProGuard),
            ToolStyle::AllatoriLike => Some(ToolLabel::Allatori),
            ToolStyle::DashoLike => Some(ToolLabel::DashO),
            ToolStyle::OtherLike => Some(ToolLabel::Other),
            ToolStyle::None => None,
        }
    }

    /// Techniques the style's tool is able to apply.
    pub fn capabilities(self) -> TechniqueSet {
        match self {
            ToolStyle::ProguardLike => [Technique::IR].into_iter().collect(),
            ToolStyle::None => TechniqueSet::NONE,
            _ => TechniqueSet::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StringProfile {
    Natural,
    EncryptedLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileLabel {
    pub obfuscated: bool,
    pub tool_style: ToolStyle,
    pub techniques: TechniqueSet,
}

/// Weights of the name-length buckets 1, 2, 3, 4 and >4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthWeights {
    #[serde(rename = "1")]
    pub len1: f64,
    #[serde(rename = "2")]
    pub len2: f64,
    #[serde(rename = "3")]
    pub len3: f64,
    #[serde(rename = "4")]
    pub len4: f64,
    #[serde(rename = ">4")]
    pub long: f64,
}

impl LengthWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.len1, self.len2, self.len3, self.len4, self.long]
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        LengthWeights {
            len1: w[0],
            len2: w[1],
            len3: w[2],
            len4: w[3],
            long: w[4],
        }
    }
}

/// Relative weights of sampled instruction families. `other` covers constants,
/// arithmetic, string loads and field reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstructionMix {
    pub nop: f64,
    pub goto: f64,
    pub invoke: f64,
    #[serde(rename = "if")]
    pub if_: f64,
    #[serde(rename = "move")]
    pub move_: f64,
    pub other: f64,
}

impl InstructionMix {
    pub fn as_array(&self) -> [f64; 6] {
        [self.nop, self.goto, self.invoke, self.if_, self.move_, self.other]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationProfile {
    pub label: ProfileLabel,
    pub n_classes: usize,
    pub n_methods_per_class: usize,
    pub n_fields_per_class: usize,
    /// Program strings (const-string operands) per class.
    pub n_strings_per_class: usize,
    /// Mean sampled body length; actual lengths are uniform in `[m/2, 3m/2]`.
    pub instructions_per_method: usize,
    /// Number of `classesN.dex` files the classes are spread over.
    pub dex_files: usize,
    pub name_length_distribution: LengthWeights,
    pub special_char_rate: f64,
    pub numeric_rate: f64,
    /// Pool of characters used when a name receives a special character.
    pub special_chars: String,
    pub string_profile: StringProfile,
    pub instruction_mix: InstructionMix,
    pub junk_instruction_rate: f64,
    pub seed: u64,
}

impl GenerationProfile {
    /// Unobfuscated app with natural, wordlist-based names.
    pub fn natural(seed: u64) -> Self {
        GenerationProfile {
            label: ProfileLabel {
                obfuscated: false,
                tool_style: ToolStyle::None,
                techniques: TechniqueSet::NONE,
            },
            n_classes: 24,
            n_methods_per_class: 5,
            n_fields_per_class: 3,
            n_strings_per_class: 4,
            instructions_per_method: 12,
            dex_files: 1,
            name_length_distribution: LengthWeights::from_array([0.0, 0.01, 0.02, 0.02, 0.95]),
            special_char_rate: 0.05,
            numeric_rate: 0.05,
            special_chars: "$_".into(),
            string_profile: StringProfile::Natural,
            instruction_mix: InstructionMix {
                nop: 0.0,
                goto: 0.04,
                invoke: 0.24,
                if_: 0.08,
                move_: 0.18,
                other: 0.46,
            },
            junk_instruction_rate: 0.0,
            seed,
        }
    }

    /// Preset for a (tool style, technique set) cell. The set must be
    /// non-empty exactly when the style is an obfuscator, and within the
    /// style's capabilities.
    pub fn preset(
        style: ToolStyle,
        techniques: TechniqueSet,
        seed: u64,
    ) -> Result<Self, SynthError> {
        check_label(style, techniques)?;
        let transform = TechniqueTransform::default();
        let mut p = apply_technique_profile_with(&GenerationProfile::natural(seed), techniques, &transform);
        p.label = ProfileLabel {
            obfuscated: style != ToolStyle::None,
            tool_style: style,
            techniques,
        };
        let ir = techniques.ir;
        let cf = techniques.cf;
        match style {
            ToolStyle::None => {}
            ToolStyle::ProguardLike => {
                p.special_char_rate = 0.0;
                p.numeric_rate = 0.0;
            }
            ToolStyle::AllatoriLike => {
                p.special_chars = "$".into();
                p.special_char_rate = 0.6;
                p.numeric_rate = 0.08;
                if cf {
                    p.instruction_mix.nop *= 2.0;
                }
            }
            ToolStyle::DashoLike => {
                p.special_char_rate = 0.04;
                p.numeric_rate = 0.7;
                if cf {
                    p.instruction_mix.goto *= 1.5;
                    p.instruction_mix.if_ += 0.1;
                }
            }
            ToolStyle::OtherLike => {
                p.special_chars = "_-\u{e9}\u{f8}\u{df}".into();
                p.special_char_rate = 0.35;
                p.numeric_rate = 0.3;
                if ir {
                    p.name_length_distribution =
                        LengthWeights::from_array([0.0, 0.2, 0.4, 0.4, 0.0]);
                }
            }
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let infeasible = |msg: String| Err(SynthError::ProfileInfeasible(msg));
        let weights = self.name_length_distribution.as_array();
        let mix = self.instruction_mix.as_array();
        for (what, w) in [("name_length_distribution", &weights[..]), ("instruction_mix", &mix[..])] {
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return infeasible(format!("{what} has a negative or non-finite weight"));
            }
            if !w.iter().any(|x| *x > 0.0) {
                return infeasible(format!("{what} has no positive weight"));
            }
        }
        for (what, r) in [
            ("special_char_rate", self.special_char_rate),
            ("numeric_rate", self.numeric_rate),
            ("junk_instruction_rate", self.junk_instruction_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return infeasible(format!("{what} = {r} is outside [0, 1]"));
            }
        }
        if self.n_classes == 0
            && (self.n_methods_per_class > 0
                || self.n_fields_per_class > 0
                || self.n_strings_per_class > 0)
        {
            return infeasible("zero classes with nonzero members".into());
        }
        if self.dex_files == 0 {
            return infeasible("dex_files must be at least 1".into());
        }
        if self.n_classes > 0 && self.dex_files > self.n_classes {
            return infeasible(format!(
                "{} dex files for {} classes",
                self.dex_files, self.n_classes
            ));
        }
        if self.special_char_rate > 0.0 && self.special_chars.is_empty() {
            return infeasible("special_char_rate > 0 with an empty special_chars pool".into());
        }
        if self.special_chars.chars().any(|c| c.is_ascii_alphanumeric() || c == '/' || c == ';') {
            return infeasible("special_chars must not contain letters, digits, '/' or ';'".into());
        }
        if self.label.obfuscated != (self.label.tool_style != ToolStyle::None) {
            return infeasible("obfuscated flag disagrees with tool_style".into());
        }
        check_label(self.label.tool_style, self.label.techniques)
    }
}

fn check_label(style: ToolStyle, techniques: TechniqueSet) -> Result<(), SynthError> {
    if style == ToolStyle::None && !techniques.is_empty() {
        return Err(SynthError::ProfileInfeasible(format!(
            "style none cannot carry techniques {techniques}"
        )));
    }
    if style != ToolStyle::None && techniques.is_empty() {
        return Err(SynthError::ProfileInfeasible(format!(
            "{} needs at least one technique",
            style.name()
        )));
    }
    let caps = style.capabilities();
    if let Some(t) = techniques.iter().find(|&t| !caps.contains(t)) {
        return Err(SynthError::ProfileInfeasible(format!(
            "{} cannot apply {t}",
            style.name()
        )));
    }
    Ok(())
}

/// Strength of each technique's effect on a profile. The IR length weights
/// set the separability margin between clean and renamed apps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechniqueTransform {
    pub ir_length_weights: LengthWeights,
    pub ir_rate_boost: f64,
    pub cf_junk_rate: f64,
    pub cf_nop_goto_boost: f64,
}

impl Default for TechniqueTransform {
    fn default() -> Self {
        TechniqueTransform {
            ir_length_weights: LengthWeights::from_array([0.5, 0.5, 0.0, 0.0, 0.0]),
            ir_rate_boost: 0.1,
            cf_junk_rate: 0.3,
            cf_nop_goto_boost: 0.15,
        }
    }
}

pub fn apply_technique_profile(base: &GenerationProfile, t: TechniqueSet) -> GenerationProfile {
    apply_technique_profile_with(base, t, &TechniqueTransform::default())
}

pub fn apply_technique_profile_with(
    base: &GenerationProfile,
    t: TechniqueSet,
    transform: &TechniqueTransform,
) -> GenerationProfile {
    let mut p = base.clone();
    if t.ir {
        p.name_length_distribution = transform.ir_length_weights;
        p.special_char_rate = (p.special_char_rate + transform.ir_rate_boost).min(1.0);
        p.numeric_rate = (p.numeric_rate + transform.ir_rate_boost).min(1.0);
    }
    if t.cf {
        p.junk_instruction_rate = p.junk_instruction_rate.max(transform.cf_junk_rate);
        p.instruction_mix.nop += transform.cf_nop_goto_boost;
        p.instruction_mix.goto += transform.cf_nop_goto_boost;
    }
    if t.se {
        p.string_profile = StringProfile::EncryptedLike;
    }
    p.label.techniques = p.label.techniques.union(t);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ts: &[Technique]) -> TechniqueSet {
        ts.iter().copied().collect()
    }

    #[test]
    fn empty_set_is_identity() {
        let base = GenerationProfile::natural(7);
        assert_eq!(apply_technique_profile(&base, TechniqueSet::NONE), base);
    }

    #[test]
    fn disjoint_techniques_compose() {
        let base = GenerationProfile::natural(7);
        let stepwise = apply_technique_profile(
            &apply_technique_profile(&base, set(&[Technique::IR])),
            set(&[Technique::SE]),
        );
        assert_eq!(stepwise, apply_technique_profile(&base, set(&[Technique::IR, Technique::SE])));
    }

    #[test]
    fn cf_raises_nop_and_goto() {
        let base = GenerationProfile::natural(7);
        let cf = apply_technique_profile(&base, set(&[Technique::CF]));
        let weight = |p: &GenerationProfile| p.instruction_mix.nop + p.instruction_mix.goto;
        assert!(weight(&cf) > weight(&base));
        assert!(cf.junk_instruction_rate > base.junk_instruction_rate);
    }

    #[test]
    fn ir_moves_mass_to_short_buckets() {
        let ir = apply_technique_profile(&GenerationProfile::natural(1), set(&[Technique::IR]));
        let w = ir.name_length_distribution.as_array();
        assert_eq!(&w[2..], &[0.0; 3]);
        assert!(ir.special_char_rate > GenerationProfile::natural(1).special_char_rate);
    }

    #[test]
    fn proguard_like_rejects_cf_and_se() {
        for t in [set(&[Technique::CF]), set(&[Technique::IR, Technique::SE])] {
            assert!(matches!(
                GenerationProfile::preset(ToolStyle::ProguardLike, t, 0),
                Err(SynthError::ProfileInfeasible(_))
            ));
        }
        assert!(GenerationProfile::preset(ToolStyle::ProguardLike, set(&[Technique::IR]), 0).is_ok());
    }

    #[test]
    fn label_consistency_is_enforced() {
        assert!(GenerationProfile::preset(ToolStyle::None, set(&[Technique::IR]), 0).is_err());
        assert!(GenerationProfile::preset(ToolStyle::DashoLike, TechniqueSet::NONE, 0).is_err());
    }

    #[test]
    fn zero_classes_with_methods_is_infeasible() {
        let mut p = GenerationProfile::natural(0);
        p.n_classes = 0;
        assert!(matches!(p.validate(), Err(SynthError::ProfileInfeasible(_))));
        p.n_methods_per_class = 0;
        p.n_fields_per_class = 0;
        p.n_strings_per_class = 0;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rates_and_weights_are_checked() {
        let mut p = GenerationProfile::natural(0);
        p.numeric_rate = 1.5;
        assert!(p.validate().is_err());
        let mut p = GenerationProfile::natural(0);
        p.name_length_distribution = LengthWeights::from_array([0.0; 5]);
        assert!(p.validate().is_err());
        let mut p = GenerationProfile::natural(0);
        p.instruction_mix.goto = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn profile_json_round_trips() {
        let p = GenerationProfile::preset(ToolStyle::AllatoriLike, TechniqueSet::ALL, 3).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"allatori-like\""));
        assert!(json.contains("\">4\""));
        assert_eq!(serde_json::from_str::<GenerationProfile>(&json).unwrap(), p);
    }
}
