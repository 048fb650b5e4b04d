//! Bounds-checked reader for the Dalvik Executable format (versions 035-039).
//!
//! The parser decodes exactly what identifier and instruction statistics need:
//! the string pool, type/proto/field/method identifier tables, class
//! definitions and the opcode stream of every code item reachable from a
//! class definition. Checksum and signature are read but not verified.

use thiserror::Error;

use super::mutf8;
use super::opcodes::{decode_at, Decoded};

pub const HEADER_SIZE: usize = 0x70;
pub const ENDIAN_CONSTANT: u32 = 0x1234_5678;
pub const NO_INDEX: u32 = 0xffff_ffff;

const CODE_ITEM_HEADER: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DexError {
    #[error("bad DEX magic")]
    BadMagic,
    #[error("unsupported endian tag {0:#010x}")]
    UnsupportedEndian(u32),
    #[error("truncated file: {what} at offset {offset} needs {needed} bytes but payload is {len} bytes")]
    TruncatedFile {
        what: &'static str,
        offset: u64,
        needed: u64,
        len: usize,
    },
    #[error("{what} index {index} out of bounds (size {bound})")]
    IndexOutOfBounds {
        what: &'static str,
        index: u64,
        bound: usize,
    },
    #[error("malformed string data at offset {offset}")]
    MalformedString { offset: usize },
    #[error("malformed LEB128 value at offset {offset}")]
    MalformedLeb128 { offset: usize },
}

type Result<T> = std::result::Result<T, DexError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtoEntry {
    pub shorty_idx: u32,
    pub return_type_idx: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldEntry {
    pub class_idx: u32,
    pub type_idx: u32,
    pub name_idx: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodEntry {
    pub class_idx: u32,
    pub proto_idx: u32,
    pub name_idx: u32,
}

/// Opcode stream of one method body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeUnit {
    pub method_idx: u32,
    /// Opcode byte of every decoded instruction, in stream order. Payload
    /// pseudo-instructions are not included.
    pub opcodes: Vec<u8>,
    /// `false` when decoding stopped early at an unassigned opcode or an
    /// instruction overrunning the code item.
    pub complete: bool,
}

/// Parsed DEX file. Every index stored here has been checked against the pool
/// it refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexFile {
    pub magic: [u8; 8],
    pub checksum: u32,
    pub signature: [u8; 20],
    pub string_pool: Vec<String>,
    /// Type descriptor string index for every `type_id`.
    pub type_ids: Vec<u32>,
    pub protos: Vec<ProtoEntry>,
    pub field_entries: Vec<FieldEntry>,
    pub method_entries: Vec<MethodEntry>,
    /// Type index of every defined class, in `class_def` order.
    pub class_defs: Vec<u32>,
    pub code_units: Vec<CodeUnit>,
}

impl DexFile {
    /// Three-digit format version from the magic, e.g. `"035"`.
    pub fn version(&self) -> &str {
        std::str::from_utf8(&self.magic[4..7]).unwrap_or("???")
    }

    pub fn type_descriptor(&self, type_idx: u32) -> &str {
        &self.string_pool[self.type_ids[type_idx as usize] as usize]
    }

    pub fn type_descriptors(&self) -> impl Iterator<Item = &str> + '_ {
        self.type_ids
            .iter()
            .map(|&s| self.string_pool[s as usize].as_str())
    }

    pub fn string(&self, string_idx: u32) -> &str {
        &self.string_pool[string_idx as usize]
    }
}

/// Checks the 8-byte `dex\nNNN\0` magic.
pub fn has_dex_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 8
        && &bytes[..4] == b"dex\n"
        && bytes[4..7].iter().all(u8::is_ascii_digit)
        && bytes[7] == 0
}

struct Reader<'a> {
    data: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&self, offset: u64, size: u64, what: &'static str) -> Result<&'a [u8]> {
        let end = offset.checked_add(size);
        match end {
            Some(end) if end <= self.data.len() as u64 => {
                Ok(&self.data[offset as usize..end as usize])
            }
            _ => Err(DexError::TruncatedFile {
                what,
                offset,
                needed: size,
                len: self.data.len(),
            }),
        }
    }

    fn u16_at(&self, offset: u64, what: &'static str) -> Result<u16> {
        let b = self.slice(offset, 2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_at(&self, offset: u64, what: &'static str) -> Result<u32> {
        let b = self.slice(offset, 4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Unsigned LEB128 at `*pos`, advancing it.
    fn uleb128(&self, pos: &mut usize, what: &'static str) -> Result<u32> {
        let start = *pos;
        let mut value: u32 = 0;
        for i in 0..5 {
            let byte = *self.data.get(*pos).ok_or(DexError::TruncatedFile {
                what,
                offset: *pos as u64,
                needed: 1,
                len: self.data.len(),
            })?;
            *pos += 1;
            if i == 4 && byte > 0x0f {
                return Err(DexError::MalformedLeb128 { offset: start });
            }
            value |= u32::from(byte & 0x7f) << (7 * i);
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(DexError::MalformedLeb128 { offset: start })
    }

    /// Verifies a `(size, offset)` table of fixed-size items fits the payload.
    fn table(&self, size: u32, offset: u32, item: u64, what: &'static str) -> Result<u64> {
        if size > 0 {
            self.slice(u64::from(offset), u64::from(size) * item, what)?;
        }
        Ok(u64::from(offset))
    }
}

fn check_index(what: &'static str, index: u32, bound: usize) -> Result<u32> {
    if (index as usize) < bound {
        Ok(index)
    } else {
        Err(DexError::IndexOutOfBounds {
            what,
            index: u64::from(index),
            bound,
        })
    }
}

/// Parses a DEX payload.
pub fn parse_dex(payload: &[u8]) -> Result<DexFile> {
    if payload.len() >= 4 && &payload[..4] != b"dex\n" {
        return Err(DexError::BadMagic);
    }
    let r = Reader { data: payload };
    let header = r.slice(0, HEADER_SIZE as u64, "header")?;
    if !has_dex_magic(header) {
        return Err(DexError::BadMagic);
    }
    let mut magic = [0u8; 8];
    magic.copy_from_slice(&header[..8]);
    let checksum = r.u32_at(0x08, "checksum")?;
    let mut signature = [0u8; 20];
    signature.copy_from_slice(&header[0x0c..0x20]);

    let file_size = r.u32_at(0x20, "file_size")?;
    r.slice(0, u64::from(file_size), "file_size")?;
    let endian = r.u32_at(0x28, "endian_tag")?;
    if endian != ENDIAN_CONSTANT {
        return Err(DexError::UnsupportedEndian(endian));
    }

    let count = |off| r.u32_at(off, "header");
    let (string_n, string_off) = (count(0x38)?, count(0x3c)?);
    let (type_n, type_off) = (count(0x40)?, count(0x44)?);
    let (proto_n, proto_off) = (count(0x48)?, count(0x4c)?);
    let (field_n, field_off) = (count(0x50)?, count(0x54)?);
    let (method_n, method_off) = (count(0x58)?, count(0x5c)?);
    let (class_n, class_off) = (count(0x60)?, count(0x64)?);

    let string_base = r.table(string_n, string_off, 4, "string_ids")?;
    let type_base = r.table(type_n, type_off, 4, "type_ids")?;
    let proto_base = r.table(proto_n, proto_off, 12, "proto_ids")?;
    let field_base = r.table(field_n, field_off, 8, "field_ids")?;
    let method_base = r.table(method_n, method_off, 8, "method_ids")?;
    let class_base = r.table(class_n, class_off, 32, "class_defs")?;

    let mut string_pool = Vec::with_capacity(string_n as usize);
    for i in 0..u64::from(string_n) {
        let data_off = r.u32_at(string_base + 4 * i, "string_ids")? as usize;
        let mut pos = data_off;
        let utf16_size = r.uleb128(&mut pos, "string_data")?;
        if pos > payload.len() {
            return Err(DexError::TruncatedFile {
                what: "string_data",
                offset: pos as u64,
                needed: 1,
                len: payload.len(),
            });
        }
        let (text, _) = match mutf8::decode(&payload[pos..]) {
            Some(decoded) => decoded,
            None if !payload[pos..].contains(&0) => {
                return Err(DexError::TruncatedFile {
                    what: "string_data",
                    offset: pos as u64,
                    needed: payload.len() as u64 - pos as u64 + 1,
                    len: payload.len(),
                })
            }
            None => return Err(DexError::MalformedString { offset: data_off }),
        };
        if mutf8::utf16_len(&text) != utf16_size as usize {
            return Err(DexError::MalformedString { offset: data_off });
        }
        string_pool.push(text);
    }
    let n_strings = string_pool.len();

    let mut type_ids = Vec::with_capacity(type_n as usize);
    for i in 0..u64::from(type_n) {
        let idx = r.u32_at(type_base + 4 * i, "type_ids")?;
        type_ids.push(check_index("type descriptor string", idx, n_strings)?);
    }
    let n_types = type_ids.len();

    let mut protos = Vec::with_capacity(proto_n as usize);
    for i in 0..u64::from(proto_n) {
        let at = proto_base + 12 * i;
        let shorty_idx = check_index("proto shorty", r.u32_at(at, "proto_ids")?, n_strings)?;
        let return_type_idx =
            check_index("proto return type", r.u32_at(at + 4, "proto_ids")?, n_types)?;
        let params_off = r.u32_at(at + 8, "proto_ids")?;
        if params_off != 0 {
            let size = r.u32_at(u64::from(params_off), "type_list")?;
            let list = r.slice(u64::from(params_off) + 4, u64::from(size) * 2, "type_list")?;
            for pair in list.chunks_exact(2) {
                let idx = u16::from_le_bytes([pair[0], pair[1]]);
                check_index("proto parameter type", u32::from(idx), n_types)?;
            }
        }
        protos.push(ProtoEntry {
            shorty_idx,
            return_type_idx,
        });
    }

    let mut field_entries = Vec::with_capacity(field_n as usize);
    for i in 0..u64::from(field_n) {
        let at = field_base + 8 * i;
        field_entries.push(FieldEntry {
            class_idx: check_index("field class", r.u16_at(at, "field_ids")?.into(), n_types)?,
            type_idx: check_index("field type", r.u16_at(at + 2, "field_ids")?.into(), n_types)?,
            name_idx: check_index("field name", r.u32_at(at + 4, "field_ids")?, n_strings)?,
        });
    }

    let mut method_entries = Vec::with_capacity(method_n as usize);
    for i in 0..u64::from(method_n) {
        let at = method_base + 8 * i;
        method_entries.push(MethodEntry {
            class_idx: check_index("method class", r.u16_at(at, "method_ids")?.into(), n_types)?,
            proto_idx: check_index(
                "method proto",
                r.u16_at(at + 2, "method_ids")?.into(),
                protos.len(),
            )?,
            name_idx: check_index("method name", r.u32_at(at + 4, "method_ids")?, n_strings)?,
        });
    }

    let mut class_defs = Vec::with_capacity(class_n as usize);
    let mut code_units = Vec::new();
    for i in 0..u64::from(class_n) {
        let at = class_base + 32 * i;
        let class_idx = check_index("class_def class", r.u32_at(at, "class_defs")?, n_types)?;
        let superclass = r.u32_at(at + 8, "class_defs")?;
        if superclass != NO_INDEX {
            check_index("superclass", superclass, n_types)?;
        }
        let source_file = r.u32_at(at + 16, "class_defs")?;
        if source_file != NO_INDEX {
            check_index("source file", source_file, n_strings)?;
        }
        let class_data_off = r.u32_at(at + 24, "class_defs")?;
        if class_data_off != 0 {
            read_class_data(
                &r,
                class_data_off as usize,
                field_entries.len(),
                method_entries.len(),
                &mut code_units,
            )?;
        }
        class_defs.push(class_idx);
    }

    Ok(DexFile {
        magic,
        checksum,
        signature,
        string_pool,
        type_ids,
        protos,
        field_entries,
        method_entries,
        class_defs,
        code_units,
    })
}

fn read_class_data(
    r: &Reader<'_>,
    offset: usize,
    n_fields: usize,
    n_methods: usize,
    code_units: &mut Vec<CodeUnit>,
) -> Result<()> {
    let mut pos = offset;
    let static_fields = r.uleb128(&mut pos, "class_data")?;
    let instance_fields = r.uleb128(&mut pos, "class_data")?;
    let direct_methods = r.uleb128(&mut pos, "class_data")?;
    let virtual_methods = r.uleb128(&mut pos, "class_data")?;

    for list_len in [static_fields, instance_fields] {
        let mut field_idx: u32 = 0;
        for _ in 0..list_len {
            let diff = r.uleb128(&mut pos, "encoded_field")?;
            field_idx = field_idx.checked_add(diff).ok_or(DexError::IndexOutOfBounds {
                what: "encoded field",
                index: u64::from(field_idx) + u64::from(diff),
                bound: n_fields,
            })?;
            check_index("encoded field", field_idx, n_fields)?;
            r.uleb128(&mut pos, "encoded_field")?;
        }
    }

    for list_len in [direct_methods, virtual_methods] {
        let mut method_idx: u32 = 0;
        for _ in 0..list_len {
            let diff = r.uleb128(&mut pos, "encoded_method")?;
            method_idx = method_idx.checked_add(diff).ok_or(DexError::IndexOutOfBounds {
                what: "encoded method",
                index: u64::from(method_idx) + u64::from(diff),
                bound: n_methods,
            })?;
            check_index("encoded method", method_idx, n_methods)?;
            let _access = r.uleb128(&mut pos, "encoded_method")?;
            let code_off = r.uleb128(&mut pos, "encoded_method")?;
            if code_off != 0 {
                code_units.push(read_code_item(r, u64::from(code_off), method_idx)?);
            }
        }
    }
    Ok(())
}

fn read_code_item(r: &Reader<'_>, offset: u64, method_idx: u32) -> Result<CodeUnit> {
    r.slice(offset, CODE_ITEM_HEADER as u64, "code_item")?;
    let insns_size = r.u32_at(offset + 12, "code_item")?;
    let raw = r.slice(
        offset + CODE_ITEM_HEADER as u64,
        u64::from(insns_size) * 2,
        "code_item insns",
    )?;
    let insns: Vec<u16> = raw
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();

    let mut opcodes = Vec::new();
    let mut pos = 0;
    let mut complete = true;
    while pos < insns.len() {
        match decode_at(&insns, pos) {
            Some(Decoded::Instruction { opcode, width }) => {
                opcodes.push(opcode);
                pos += width;
            }
            Some(Decoded::Payload { width }) => pos += width,
            None => {
                complete = false;
                break;
            }
        }
    }
    Ok(CodeUnit {
        method_idx,
        opcodes,
        complete,
    })
}
