use std::io::{Cursor, Read};
use std::path::Path;

use thiserror::Error;

use super::parser::has_dex_magic;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a ZIP archive or DEX file")]
    NotAnArchive,
    #[error("archive contains no classes*.dex entries")]
    NoDexEntries,
    #[error("entry {path} failed to decompress: {reason}")]
    CorruptEntry { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexEntry {
    pub path: String,
    pub payload: Vec<u8>,
}

/// The DEX payloads of an APK (or a bare DEX file), in multidex order:
/// `classes.dex`, `classes2.dex`, `classes3.dex`, ...
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApkContainer {
    /// Every entry name in the archive, in central-directory order.
    pub entry_names: Vec<String>,
    pub dex: Vec<DexEntry>,
}

impl ApkContainer {
    pub fn dex_payloads(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.dex.iter().map(|e| e.payload.as_slice())
    }
}

/// Multidex position of a root-level `classes.dex` / `classesN.dex` entry.
pub fn multidex_index(name: &str) -> Option<u32> {
    let digits = name.strip_prefix("classes")?.strip_suffix(".dex")?;
    if digits.is_empty() {
        return Some(1);
    }
    let n: u32 = digits.parse().ok()?;
    (n >= 2 && n.to_string() == digits).then_some(n)
}

pub fn open_container(path: impl AsRef<Path>) -> Result<ApkContainer, ContainerError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    container_from_bytes(&bytes)
}

pub fn container_from_bytes(bytes: &[u8]) -> Result<ApkContainer, ContainerError> {
    if has_dex_magic(bytes) {
        return Ok(ApkContainer {
            entry_names: vec!["classes.dex".to_string()],
            dex: vec![DexEntry {
                path: "classes.dex".to_string(),
                payload: bytes.to_vec(),
            }],
        });
    }

    let mut archive =
        zip::ZipArchive::new(Cursor::new(bytes)).map_err(|_| ContainerError::NotAnArchive)?;
    let ordered: Vec<String> = (0..archive.len())
        .map(|i| archive.name_for_index(i).unwrap_or_default().to_string())
        .collect();

    let mut dex: Vec<(u32, DexEntry)> = Vec::new();
    for (i, name) in ordered.iter().enumerate() {
        let Some(n) = multidex_index(name) else {
            continue;
        };
        let corrupt = |reason: String| ContainerError::CorruptEntry {
            path: name.clone(),
            reason,
        };
        let mut file = archive.by_index(i).map_err(|e| corrupt(e.to_string()))?;
        let mut payload = Vec::with_capacity(file.size() as usize);
        file.read_to_end(&mut payload)
            .map_err(|e| corrupt(e.to_string()))?;
        dex.push((
            n,
            DexEntry {
                path: name.clone(),
                payload,
            },
        ));
    }
    if dex.is_empty() {
        return Err(ContainerError::NoDexEntries);
    }
    dex.sort_by_key(|(n, _)| *n);
    Ok(ApkContainer {
        entry_names: ordered,
        dex: dex.into_iter().map(|(_, e)| e).collect(),
    })
}
