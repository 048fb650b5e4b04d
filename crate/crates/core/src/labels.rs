//! Obfuscation tool and technique labels shared by the generator, the model
//! bank and the detector.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolLabel {
    ProGuard,
    Allatori,
    DashO,
    Other,
}

impl ToolLabel {
    pub const ALL: [ToolLabel; 4] = [
        ToolLabel::ProGuard,
        ToolLabel::Allatori,
        ToolLabel::DashO,
        ToolLabel::Other,
    ];

    /// Tools with a dedicated classifier, in tie-break order.
    pub const CLASSIFIED: [ToolLabel; 3] = [ToolLabel::ProGuard, ToolLabel::Allatori, ToolLabel::DashO];

    pub fn name(self) -> &'static str {
        match self {
            ToolLabel::ProGuard => "ProGuard",
            ToolLabel::Allatori => "Allatori",
            ToolLabel::DashO => "DashO",
            ToolLabel::Other => "Other",
        }
    }
}

impl fmt::Display for ToolLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technique {
    /// Identifier renaming.
    IR,
    /// Control-flow modification.
    CF,
    /// String encryption.
    SE,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::IR, Technique::CF, Technique::SE];

    pub fn name(self) -> &'static str {
        match self {
            Technique::IR => "IR",
            Technique::CF => "CF",
            Technique::SE => "SE",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TechniqueSet {
    pub ir: bool,
    pub cf: bool,
    pub se: bool,
}

impl TechniqueSet {
    pub const NONE: TechniqueSet = TechniqueSet {
        ir: false,
        cf: false,
        se: false,
    };
    pub const ALL: TechniqueSet = TechniqueSet {
        ir: true,
        cf: true,
        se: true,
    };

    pub fn contains(&self, t: Technique) -> bool {
        match t {
            Technique::IR => self.ir,
            Technique::CF => self.cf,
            Technique::SE => self.se,
        }
    }

    pub fn insert(&mut self, t: Technique) {
        match t {
            Technique::IR => self.ir = true,
            Technique::CF => self.cf = true,
            Technique::SE => self.se = true,
        }
    }

    pub fn union(self, other: TechniqueSet) -> TechniqueSet {
        TechniqueSet {
            ir: self.ir || other.ir,
            cf: self.cf || other.cf,
            se: self.se || other.se,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.ir || self.cf || self.se)
    }

    pub fn len(&self) -> usize {
        Technique::ALL.iter().filter(|&&t| self.contains(t)).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = Technique> + '_ {
        Technique::ALL.into_iter().filter(|&t| self.contains(t))
    }
}

impl FromIterator<Technique> for TechniqueSet {
    fn from_iter<I: IntoIterator<Item = Technique>>(iter: I) -> Self {
        let mut set = TechniqueSet::NONE;
        for t in iter {
            set.insert(t);
        }
        set
    }
}

impl fmt::Display for TechniqueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Technique::name).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Ground truth for one app. `tool` and `techniques` are present exactly when
/// the app is obfuscated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppLabel {
    pub obfuscated: bool,
    #[serde(default)]
    pub tool: Option<ToolLabel>,
    #[serde(default)]
    pub techniques: Option<TechniqueSet>,
}

impl AppLabel {
    pub fn clean() -> Self {
        AppLabel {
            obfuscated: false,
            tool: None,
            techniques: None,
        }
    }

    pub fn obfuscated(tool: ToolLabel, techniques: TechniqueSet) -> Self {
        AppLabel {
            obfuscated: true,
            tool: Some(tool),
            techniques: Some(techniques),
        }
    }
}
