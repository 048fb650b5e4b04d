//! APK container access and DEX parsing.
//!
//! [`load_symbols`] is the usual entry point: it opens an APK (or a bare DEX
//! file), parses every `classesN.dex` and merges their symbol tables into one
//! per-APK table.

mod container;
pub mod mutf8;
pub mod opcodes;
mod parser;
mod symbols;

use std::path::Path;

use thiserror::Error;

pub use container::{
    container_from_bytes, multidex_index, open_container, ApkContainer, ContainerError, DexEntry,
};
pub use opcodes::OpcodeFamily;
pub use parser::{
    has_dex_magic, parse_dex, CodeUnit, DexError, DexFile, FieldEntry, MethodEntry, ProtoEntry,
    ENDIAN_CONSTANT, HEADER_SIZE, NO_INDEX,
};
pub use symbols::{
    extract_symbols, is_constructor_name, merge_symbols, simple_class_name, NameBag,
    OpcodeHistogram, SymbolTable,
};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("{path}: {source}")]
    Dex {
        path: String,
        #[source]
        source: DexError,
    },
}

impl ExtractError {
    /// Short machine-readable tag used in analysis records.
    pub fn kind(&self) -> &'static str {
        match self {
            ExtractError::Container(ContainerError::Io { .. }) => "io",
            ExtractError::Container(ContainerError::NotAnArchive) => "not_an_archive",
            ExtractError::Container(ContainerError::NoDexEntries) => "no_dex_entries",
            ExtractError::Container(ContainerError::CorruptEntry { .. }) => "corrupt_entry",
            ExtractError::Dex { source, .. } => match source {
                DexError::BadMagic => "bad_magic",
                DexError::UnsupportedEndian(_) => "unsupported_endian",
                DexError::TruncatedFile { .. } => "truncated_file",
                DexError::IndexOutOfBounds { .. } => "index_out_of_bounds",
                DexError::MalformedString { .. } => "malformed_string",
                DexError::MalformedLeb128 { .. } => "malformed_leb128",
            },
        }
    }
}

/// Parses every DEX payload of `container` and merges the results.
pub fn container_symbols(container: &ApkContainer) -> Result<SymbolTable, ExtractError> {
    let mut tables = Vec::with_capacity(container.dex.len());
    for entry in &container.dex {
        let dex = parse_dex(&entry.payload).map_err(|source| ExtractError::Dex {
            path: entry.path.clone(),
            source,
        })?;
        tables.push(extract_symbols(&dex));
    }
    Ok(merge_symbols(&tables))
}

/// Per-APK symbol table of the file at `path`.
pub fn load_symbols(path: impl AsRef<Path>) -> Result<SymbolTable, ExtractError> {
    container_symbols(&open_container(path)?)
}

/// Per-APK symbol table of in-memory APK or DEX bytes.
pub fn symbols_from_bytes(bytes: &[u8]) -> Result<SymbolTable, ExtractError> {
    container_symbols(&container_from_bytes(bytes)?)
}
