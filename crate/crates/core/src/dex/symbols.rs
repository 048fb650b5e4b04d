use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::opcodes::OpcodeFamily;
use super::parser::DexFile;

/// Multiset of names. Enumeration order is lexicographic, so two bags with
/// the same contents compare and serialize identically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NameBag {
    counts: BTreeMap<String, u64>,
}

impl NameBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>) {
        self.insert_n(name, 1);
    }

    pub fn insert_n(&mut self, name: impl Into<String>, n: u64) {
        if n > 0 {
            *self.counts.entry(name.into()).or_insert(0) += n;
        }
    }

    /// Total number of elements, counting duplicates.
    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    /// Distinct names with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn union_with(&mut self, other: &NameBag) {
        for (name, n) in other.iter() {
            self.insert_n(name, n);
        }
    }
}

impl<S: Into<String>> FromIterator<S> for NameBag {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut bag = NameBag::new();
        for name in iter {
            bag.insert(name);
        }
        bag
    }
}

/// Occurrence counts of the tracked opcode families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpcodeHistogram {
    pub nop: u64,
    pub goto: u64,
    pub invoke: u64,
    #[serde(rename = "if")]
    pub if_: u64,
    #[serde(rename = "move")]
    pub move_: u64,
}

impl OpcodeHistogram {
    pub fn get(&self, family: OpcodeFamily) -> u64 {
        match family {
            OpcodeFamily::Nop => self.nop,
            OpcodeFamily::Goto => self.goto,
            OpcodeFamily::Invoke => self.invoke,
            OpcodeFamily::If => self.if_,
            OpcodeFamily::Move => self.move_,
        }
    }

    pub fn get_mut(&mut self, family: OpcodeFamily) -> &mut u64 {
        match family {
            OpcodeFamily::Nop => &mut self.nop,
            OpcodeFamily::Goto => &mut self.goto,
            OpcodeFamily::Invoke => &mut self.invoke,
            OpcodeFamily::If => &mut self.if_,
            OpcodeFamily::Move => &mut self.move_,
        }
    }

    pub fn add(&mut self, family: OpcodeFamily, n: u64) {
        *self.get_mut(family) += n;
    }

    pub fn tracked_total(&self) -> u64 {
        OpcodeFamily::ALL.iter().map(|&f| self.get(f)).sum()
    }
}

/// Identifier names, other strings and the opcode histogram of one DEX file
/// or, after merging, of a whole APK.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolTable {
    pub class_names: NameBag,
    pub method_names: NameBag,
    pub field_names: NameBag,
    pub other_strings: NameBag,
    pub opcode_counts: OpcodeHistogram,
    pub total_instructions: u64,
}

impl SymbolTable {
    pub fn merge(&mut self, other: &SymbolTable) {
        self.class_names.union_with(&other.class_names);
        self.method_names.union_with(&other.method_names);
        self.field_names.union_with(&other.field_names);
        self.other_strings.union_with(&other.other_strings);
        for family in OpcodeFamily::ALL {
            self.opcode_counts.add(family, other.opcode_counts.get(family));
        }
        self.total_instructions += other.total_instructions;
    }
}

/// Simple name of a class descriptor: `Lcom/example/Outer$Inner;` gives
/// `Outer$Inner`.
pub fn simple_class_name(descriptor: &str) -> &str {
    let body = descriptor
        .strip_prefix('L')
        .and_then(|d| d.strip_suffix(';'))
        .unwrap_or(descriptor);
    body.rsplit('/').next().unwrap_or(body)
}

pub fn is_constructor_name(name: &str) -> bool {
    name == "<init>" || name == "<clinit>"
}

/// Builds the symbol table of one parsed DEX file.
///
/// Only classes defined in this file contribute identifier names;
/// constructors are skipped. Other strings are the pool entries that are not
/// a type descriptor, proto shorty, method name or field name of this file.
pub fn extract_symbols(dex: &DexFile) -> SymbolTable {
    let defined: HashSet<u32> = dex.class_defs.iter().copied().collect();

    let class_names = dex
        .class_defs
        .iter()
        .map(|&t| simple_class_name(dex.type_descriptor(t)))
        .collect();

    let method_names = dex
        .method_entries
        .iter()
        .filter(|m| defined.contains(&m.class_idx))
        .map(|m| dex.string(m.name_idx))
        .filter(|name| !is_constructor_name(name))
        .collect();

    let field_names = dex
        .field_entries
        .iter()
        .filter(|f| defined.contains(&f.class_idx))
        .map(|f| dex.string(f.name_idx))
        .collect();

    let mut structural: HashSet<u32> = dex.type_ids.iter().copied().collect();
    structural.extend(dex.protos.iter().map(|p| p.shorty_idx));
    structural.extend(dex.method_entries.iter().map(|m| m.name_idx));
    structural.extend(dex.field_entries.iter().map(|f| f.name_idx));
    let other_strings = dex
        .string_pool
        .iter()
        .enumerate()
        .filter(|(i, _)| !structural.contains(&(*i as u32)))
        .map(|(_, s)| s.as_str())
        .collect();

    let mut opcode_counts = OpcodeHistogram::default();
    let mut total_instructions = 0;
    for unit in &dex.code_units {
        total_instructions += unit.opcodes.len() as u64;
        for &op in &unit.opcodes {
            if let Some(family) = OpcodeFamily::of(op) {
                opcode_counts.add(family, 1);
            }
        }
    }

    SymbolTable {
        class_names,
        method_names,
        field_names,
        other_strings,
        opcode_counts,
        total_instructions,
    }
}

/// Multiset union of per-DEX tables; counts are summed. An empty slice gives
/// an empty table.
pub fn merge_symbols<'a>(tables: impl IntoIterator<Item = &'a SymbolTable>) -> SymbolTable {
    let mut merged = SymbolTable::default();
    for table in tables {
        merged.merge(table);
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_names() {
        assert_eq!(simple_class_name("Lcom/example/Main;"), "Main");
        assert_eq!(simple_class_name("Lcom/example/Outer$Inner;"), "Outer$Inner");
        assert_eq!(simple_class_name("LTopLevel;"), "TopLevel");
        assert_eq!(simple_class_name("a/b"), "b");
    }

    #[test]
    fn merge_keeps_duplicates() {
        let a = SymbolTable {
            class_names: ["a"].into_iter().collect(),
            total_instructions: 10,
            ..Default::default()
        };
        let b = SymbolTable {
            class_names: ["a", "bb"].into_iter().collect(),
            total_instructions: 15,
            ..Default::default()
        };
        let merged = merge_symbols([&a, &b]);
        assert_eq!(merged.class_names, ["a", "a", "bb"].into_iter().collect());
        assert_eq!(merged.class_names.len(), 3);
        assert_eq!(merged.total_instructions, 25);
        assert_eq!(merge_symbols([&a]), a);
    }

    #[test]
    fn opcode_counts_are_summed() {
        let mut a = SymbolTable::default();
        a.opcode_counts.add(OpcodeFamily::Goto, 2);
        let mut b = SymbolTable::default();
        b.opcode_counts.add(OpcodeFamily::Goto, 3);
        b.opcode_counts.add(OpcodeFamily::Nop, 1);
        let m = merge_symbols([&a, &b]);
        assert_eq!(m.opcode_counts.goto, 5);
        assert_eq!(m.opcode_counts.nop, 1);
    }
}
