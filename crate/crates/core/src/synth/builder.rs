//! Minimal DEX writer.
//!
//! Produces structurally valid files: sorted and de-duplicated identifier
//! tables, 4-byte aligned code items, a map list, and correct Adler-32 and
//! SHA-1 header digests. Instructions are straight-line; branch targets always
//! point at the next instruction.

use std::collections::{BTreeMap, BTreeSet};

use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::dex::mutf8;

pub const ACC_PUBLIC: u32 = 0x1;
pub const ACC_STATIC: u32 = 0x8;
pub const ACC_CONSTRUCTOR: u32 = 0x1_0000;

pub const OBJECT: &str = "Ljava/lang/Object;";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("duplicate member {0}")]
    DuplicateMember(String),
    #[error("duplicate class {0}")]
    DuplicateClass(String),
    #[error("{what} table exceeds 16-bit index space")]
    TooLarge { what: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProtoSig {
    pub return_type: String,
    pub params: Vec<String>,
}

impl ProtoSig {
    pub fn void() -> Self {
        ProtoSig {
            return_type: "V".into(),
            params: Vec::new(),
        }
    }

    pub fn shorty(&self) -> String {
        std::iter::once(&self.return_type)
            .chain(&self.params)
            .map(|t| match t.as_bytes()[0] {
                b'L' | b'[' => 'L',
                c => c as char,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub class: String,
    pub name: String,
    pub proto: ProtoSig,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldRef {
    pub class: String,
    pub name: String,
    pub type_desc: String,
}

/// One instruction. Register operands are fixed; only the opcode and the
/// referenced pool entries vary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Insn {
    Nop,
    Goto,
    Goto16,
    Goto32,
    IfEq,
    IfEqz,
    IfLtz,
    Move,
    MoveObject,
    MoveFrom16,
    MoveResult,
    Const4,
    AddInt,
    AddInt2Addr,
    ReturnVoid,
    ConstString(String),
    StaticGet(FieldRef),
    InvokeStatic(MethodRef),
    InvokeStaticRange(MethodRef),
    InvokeVirtual(MethodRef),
    /// `invoke-direct {v<reg>}` used for constructor chaining.
    InvokeDirect(MethodRef, u8),
    /// `invoke-static {v0, v1}`.
    InvokeStatic2(MethodRef),
    /// Pre-encoded code units; must not reference any pool.
    Raw(Vec<u16>),
}

impl Insn {
    fn collect_refs(&self, refs: &mut Refs) {
        match self {
            Insn::ConstString(s) => {
                refs.strings.insert(s.clone());
            }
            Insn::StaticGet(f) => refs.add_field(f),
            Insn::InvokeStatic(m)
            | Insn::InvokeStaticRange(m)
            | Insn::InvokeVirtual(m)
            | Insn::InvokeDirect(m, _)
            | Insn::InvokeStatic2(m) => refs.add_method(m),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSpec {
    pub registers: u16,
    pub ins: u16,
    pub outs: u16,
    pub insns: Vec<Insn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSpec {
    pub name: String,
    pub proto: ProtoSig,
    pub access: u32,
    pub code: Option<CodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    pub type_desc: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpec {
    pub descriptor: String,
    pub superclass: String,
    pub fields: Vec<FieldSpec>,
    pub methods: Vec<MethodSpec>,
}

impl ClassSpec {
    pub fn new(descriptor: impl Into<String>) -> Self {
        ClassSpec {
            descriptor: descriptor.into(),
            superclass: OBJECT.into(),
            fields: Vec::new(),
            methods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexBuilder {
    pub version: [u8; 3],
    pub classes: Vec<ClassSpec>,
    /// Strings placed in the pool whether or not anything references them.
    pub extra_strings: Vec<String>,
    pub extra_types: Vec<String>,
}

impl Default for DexBuilder {
    fn default() -> Self {
        DexBuilder {
            version: *b"035",
            classes: Vec::new(),
            extra_strings: Vec::new(),
            extra_types: Vec::new(),
        }
    }
}

#[derive(Default)]
struct Refs {
    strings: BTreeSet<String>,
    types: BTreeSet<String>,
    protos: BTreeSet<ProtoSig>,
    fields: BTreeSet<FieldRef>,
    methods: BTreeSet<MethodRef>,
}

impl Refs {
    fn add_type(&mut self, t: &str) {
        self.types.insert(t.to_string());
        self.strings.insert(t.to_string());
    }

    fn add_proto(&mut self, p: &ProtoSig) {
        self.add_type(&p.return_type);
        for t in &p.params {
            self.add_type(t);
        }
        self.strings.insert(p.shorty());
        self.protos.insert(p.clone());
    }

    fn add_field(&mut self, f: &FieldRef) {
        self.add_type(&f.class);
        self.add_type(&f.type_desc);
        self.strings.insert(f.name.clone());
        self.fields.insert(f.clone());
    }

    fn add_method(&mut self, m: &MethodRef) {
        self.add_type(&m.class);
        self.add_proto(&m.proto);
        self.strings.insert(m.name.clone());
        self.methods.insert(m.clone());
    }
}

fn utf16_key(s: &str) -> Vec<u16> {
    s.encode_utf16().collect()
}

fn push_uleb128(out: &mut Vec<u8>, mut value: u32) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn align4(buf: &mut Vec<u8>) {
    while !buf.len().is_multiple_of(4) {
        buf.push(0);
    }
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub fn adler32(data: &[u8]) -> u32 {
    const MOD: u32 = 65521;
    let (mut a, mut b) = (1u32, 0u32);
    for chunk in data.chunks(5552) {
        for &byte in chunk {
            a += u32::from(byte);
            b += a;
        }
        a %= MOD;
        b %= MOD;
    }
    (b << 16) | a
}

struct Indices {
    strings: BTreeMap<String, u32>,
    types: BTreeMap<String, u32>,
    protos: BTreeMap<ProtoSig, u32>,
    fields: BTreeMap<FieldRef, u32>,
    methods: BTreeMap<MethodRef, u32>,
}

impl Indices {
    fn string(&self, s: &str) -> u32 {
        self.strings[s]
    }
    fn type_(&self, t: &str) -> u32 {
        self.types[t]
    }
    fn method(&self, m: &MethodRef) -> u16 {
        self.methods[m] as u16
    }
    fn field(&self, f: &FieldRef) -> u16 {
        self.fields[f] as u16
    }
}

fn encode_insn(insn: &Insn, idx: &Indices, out: &mut Vec<u16>) {
    match insn {
        Insn::Nop => out.push(0x0000),
        Insn::Goto => out.push(0x0128),
        Insn::Goto16 => out.extend([0x0029, 0x0002]),
        Insn::Goto32 => out.extend([0x002a, 0x0003, 0x0000]),
        Insn::IfEq => out.extend([0x1032, 0x0002]),
        Insn::IfEqz => out.extend([0x0038, 0x0002]),
        Insn::IfLtz => out.extend([0x003a, 0x0002]),
        Insn::Move => out.push(0x1001),
        Insn::MoveObject => out.push(0x1007),
        Insn::MoveFrom16 => out.extend([0x0002, 0x0001]),
        Insn::MoveResult => out.push(0x000a),
        Insn::Const4 => out.push(0x1012),
        Insn::AddInt => out.extend([0x0090, 0x0100]),
        Insn::AddInt2Addr => out.push(0x10b0),
        Insn::ReturnVoid => out.push(0x000e),
        Insn::ConstString(s) => {
            let i = idx.string(s);
            if i <= 0xffff {
                out.extend([0x001a, i as u16]);
            } else {
                out.extend([0x001b, (i & 0xffff) as u16, (i >> 16) as u16]);
            }
        }
        Insn::StaticGet(f) => out.extend([0x0060, idx.field(f)]),
        Insn::InvokeStatic(m) => out.extend([0x0071, idx.method(m), 0x0000]),
        Insn::InvokeStaticRange(m) => out.extend([0x0077, idx.method(m), 0x0000]),
        Insn::InvokeVirtual(m) => out.extend([0x106e, idx.method(m), 0x0000]),
        Insn::InvokeDirect(m, reg) => {
            out.extend([0x1070, idx.method(m), u16::from(*reg & 0x0f)])
        }
        Insn::InvokeStatic2(m) => out.extend([0x2071, idx.method(m), 0x0010]),
        Insn::Raw(units) => out.extend_from_slice(units),
    }
}

impl DexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn build(&self) -> Result<Vec<u8>, BuildError> {
        let mut refs = Refs::default();
        refs.strings.extend(self.extra_strings.iter().cloned());
        for t in &self.extra_types {
            refs.add_type(t);
        }
        let mut seen_classes = BTreeSet::new();
        for class in &self.classes {
            if !seen_classes.insert(class.descriptor.clone()) {
                return Err(BuildError::DuplicateClass(class.descriptor.clone()));
            }
            refs.add_type(&class.descriptor);
            refs.add_type(&class.superclass);
            let mut own_fields = BTreeSet::new();
            for f in &class.fields {
                let fref = FieldRef {
                    class: class.descriptor.clone(),
                    name: f.name.clone(),
                    type_desc: f.type_desc.clone(),
                };
                if !own_fields.insert(fref.clone()) {
                    return Err(BuildError::DuplicateMember(format!(
                        "{}.{}",
                        class.descriptor, f.name
                    )));
                }
                refs.add_field(&fref);
            }
            let mut own_methods = BTreeSet::new();
            for m in &class.methods {
                let mref = MethodRef {
                    class: class.descriptor.clone(),
                    name: m.name.clone(),
                    proto: m.proto.clone(),
                };
                if !own_methods.insert(mref.clone()) {
                    return Err(BuildError::DuplicateMember(format!(
                        "{}->{}",
                        class.descriptor, m.name
                    )));
                }
                refs.add_method(&mref);
                if let Some(code) = &m.code {
                    for insn in &code.insns {
                        insn.collect_refs(&mut refs);
                    }
                }
            }
        }

        // Pool ordering follows the format: strings by UTF-16 code units,
        // everything else by the indices of what it refers to.
        let mut strings: Vec<String> = refs.strings.into_iter().collect();
        strings.sort_by_key(|s| utf16_key(s));
        let string_idx: BTreeMap<String, u32> = strings
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();

        let mut types: Vec<String> = refs.types.into_iter().collect();
        types.sort_by_key(|t| string_idx[t]);
        if types.len() > 0xffff {
            return Err(BuildError::TooLarge { what: "type" });
        }
        let type_idx: BTreeMap<String, u32> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();

        let mut protos: Vec<ProtoSig> = refs.protos.into_iter().collect();
        protos.sort_by_key(|p| {
            (
                type_idx[&p.return_type],
                p.params.iter().map(|t| type_idx[t]).collect::<Vec<_>>(),
            )
        });
        let proto_idx: BTreeMap<ProtoSig, u32> = protos
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i as u32))
            .collect();

        let mut fields: Vec<FieldRef> = refs.fields.into_iter().collect();
        fields.sort_by_key(|f| (type_idx[&f.class], string_idx[&f.name], type_idx[&f.type_desc]));
        let mut methods: Vec<MethodRef> = refs.methods.into_iter().collect();
        methods.sort_by_key(|m| (type_idx[&m.class], string_idx[&m.name], proto_idx[&m.proto]));
        if fields.len() > 0xffff || methods.len() > 0xffff {
            return Err(BuildError::TooLarge { what: "member" });
        }

        let idx = Indices {
            fields: fields
                .iter()
                .enumerate()
                .map(|(i, f)| (f.clone(), i as u32))
                .collect(),
            methods: methods
                .iter()
                .enumerate()
                .map(|(i, m)| (m.clone(), i as u32))
                .collect(),
            strings: string_idx,
            types: type_idx,
            protos: proto_idx,
        };

        let n_classes = self.classes.len();
        let string_ids_off = 0x70usize;
        let type_ids_off = string_ids_off + 4 * strings.len();
        let proto_ids_off = type_ids_off + 4 * types.len();
        let field_ids_off = proto_ids_off + 12 * protos.len();
        let method_ids_off = field_ids_off + 8 * fields.len();
        let class_defs_off = method_ids_off + 8 * methods.len();
        let data_off = class_defs_off + 32 * n_classes;

        let mut data: Vec<u8> = Vec::new();
        let at = |data: &Vec<u8>| (data_off + data.len()) as u32;
        let mut map: Vec<(u16, u32, u32)> = Vec::new();

        // code items
        let mut code_offsets: Vec<Vec<u32>> = Vec::with_capacity(n_classes);
        let mut n_code = 0u32;
        let mut first_code = 0u32;
        for class in &self.classes {
            let mut offsets = Vec::with_capacity(class.methods.len());
            for m in &class.methods {
                let Some(code) = &m.code else {
                    offsets.push(0);
                    continue;
                };
                align4(&mut data);
                let off = at(&data);
                if n_code == 0 {
                    first_code = off;
                }
                n_code += 1;
                offsets.push(off);
                let mut units = Vec::new();
                for insn in &code.insns {
                    encode_insn(insn, &idx, &mut units);
                }
                put_u16(&mut data, code.registers);
                put_u16(&mut data, code.ins);
                put_u16(&mut data, code.outs);
                put_u16(&mut data, 0); // tries_size
                put_u32(&mut data, 0); // debug_info_off
                put_u32(&mut data, units.len() as u32);
                for u in units {
                    put_u16(&mut data, u);
                }
            }
            code_offsets.push(offsets);
        }
        if n_code > 0 {
            map.push((0x2001, n_code, first_code));
        }

        // type lists
        let mut type_list_off: BTreeMap<Vec<String>, u32> = BTreeMap::new();
        for p in &protos {
            if p.params.is_empty() || type_list_off.contains_key(&p.params) {
                continue;
            }
            align4(&mut data);
            let off = at(&data);
            if type_list_off.is_empty() {
                map.push((0x1001, 0, off));
            }
            type_list_off.insert(p.params.clone(), off);
            put_u32(&mut data, p.params.len() as u32);
            for t in &p.params {
                put_u16(&mut data, idx.type_(t) as u16);
            }
        }
        if let Some(entry) = map.iter_mut().find(|e| e.0 == 0x1001) {
            entry.1 = type_list_off.len() as u32;
        }

        // string data
        let mut string_data_off = Vec::with_capacity(strings.len());
        for s in &strings {
            if string_data_off.is_empty() {
                map.push((0x2002, strings.len() as u32, at(&data)));
            }
            string_data_off.push(at(&data));
            push_uleb128(&mut data, mutf8::utf16_len(s) as u32);
            data.extend(mutf8::encode(s));
            data.push(0);
        }

        // class data
        let mut class_data_off = Vec::with_capacity(n_classes);
        for (class, code_offs) in self.classes.iter().zip(&code_offsets) {
            if class.fields.is_empty() && class.methods.is_empty() {
                class_data_off.push(0);
                continue;
            }
            let off = at(&data);
            if !map.iter().any(|e| e.0 == 0x2000) {
                map.push((0x2000, 0, off));
            }
            class_data_off.push(off);

            let mut field_ids: Vec<u32> = class
                .fields
                .iter()
                .map(|f| {
                    u32::from(idx.field(&FieldRef {
                        class: class.descriptor.clone(),
                        name: f.name.clone(),
                        type_desc: f.type_desc.clone(),
                    }))
                })
                .collect();
            field_ids.sort_unstable();

            let mut direct = Vec::new();
            let mut virtual_ = Vec::new();
            for (m, &code_off) in class.methods.iter().zip(code_offs) {
                let mi = u32::from(idx.method(&MethodRef {
                    class: class.descriptor.clone(),
                    name: m.name.clone(),
                    proto: m.proto.clone(),
                }));
                let is_direct = m.access & (ACC_STATIC | ACC_CONSTRUCTOR) != 0
                    || m.name.starts_with('<');
                let entry = (mi, m.access, code_off);
                if is_direct {
                    direct.push(entry);
                } else {
                    virtual_.push(entry);
                }
            }
            direct.sort_unstable();
            virtual_.sort_unstable();

            push_uleb128(&mut data, field_ids.len() as u32);
            push_uleb128(&mut data, 0);
            push_uleb128(&mut data, direct.len() as u32);
            push_uleb128(&mut data, virtual_.len() as u32);
            let mut prev = 0;
            for (i, &fi) in field_ids.iter().enumerate() {
                push_uleb128(&mut data, if i == 0 { fi } else { fi - prev });
                push_uleb128(&mut data, ACC_PUBLIC | ACC_STATIC);
                prev = fi;
            }
            for list in [&direct, &virtual_] {
                let mut prev = 0;
                for (i, &(mi, access, code_off)) in list.iter().enumerate() {
                    push_uleb128(&mut data, if i == 0 { mi } else { mi - prev });
                    push_uleb128(&mut data, access);
                    push_uleb128(&mut data, code_off);
                    prev = mi;
                }
            }
        }
        let n_class_data = class_data_off.iter().filter(|&&o| o != 0).count() as u32;
        if let Some(entry) = map.iter_mut().find(|e| e.0 == 0x2000) {
            entry.1 = n_class_data;
        }

        // map list
        align4(&mut data);
        let map_off = at(&data);
        let mut sections: Vec<(u16, u32, u32)> = vec![(0x0000, 1, 0)];
        for (kind, n, off) in [
            (0x0001u16, strings.len(), string_ids_off),
            (0x0002, types.len(), type_ids_off),
            (0x0003, protos.len(), proto_ids_off),
            (0x0004, fields.len(), field_ids_off),
            (0x0005, methods.len(), method_ids_off),
            (0x0006, n_classes, class_defs_off),
        ] {
            if n > 0 {
                sections.push((kind, n as u32, off as u32));
            }
        }
        sections.extend(map);
        sections.push((0x1000, 1, map_off));
        sections.sort_by_key(|s| s.2);
        put_u32(&mut data, sections.len() as u32);
        for (kind, n, off) in sections {
            put_u16(&mut data, kind);
            put_u16(&mut data, 0);
            put_u32(&mut data, n);
            put_u32(&mut data, off);
        }
        align4(&mut data);

        let file_size = data_off + data.len();
        let mut out: Vec<u8> = Vec::with_capacity(file_size);
        out.extend_from_slice(b"dex\n");
        out.extend_from_slice(&self.version);
        out.push(0);
        put_u32(&mut out, 0); // checksum, patched below
        out.extend_from_slice(&[0u8; 20]); // signature, patched below
        put_u32(&mut out, file_size as u32);
        put_u32(&mut out, 0x70);
        put_u32(&mut out, crate::dex::ENDIAN_CONSTANT);
        put_u32(&mut out, 0); // link_size
        put_u32(&mut out, 0); // link_off
        put_u32(&mut out, map_off);
        for (n, off) in [
            (strings.len(), string_ids_off),
            (types.len(), type_ids_off),
            (protos.len(), proto_ids_off),
            (fields.len(), field_ids_off),
            (methods.len(), method_ids_off),
            (n_classes, class_defs_off),
        ] {
            put_u32(&mut out, n as u32);
            put_u32(&mut out, if n == 0 { 0 } else { off as u32 });
        }
        put_u32(&mut out, data.len() as u32);
        put_u32(&mut out, data_off as u32);
        debug_assert_eq!(out.len(), 0x70);

        for off in &string_data_off {
            put_u32(&mut out, *off);
        }
        for t in &types {
            put_u32(&mut out, idx.string(t));
        }
        for p in &protos {
            put_u32(&mut out, idx.string(&p.shorty()));
            put_u32(&mut out, idx.type_(&p.return_type));
            put_u32(&mut out, type_list_off.get(&p.params).copied().unwrap_or(0));
        }
        for f in &fields {
            put_u16(&mut out, idx.type_(&f.class) as u16);
            put_u16(&mut out, idx.type_(&f.type_desc) as u16);
            put_u32(&mut out, idx.string(&f.name));
        }
        for m in &methods {
            put_u16(&mut out, idx.type_(&m.class) as u16);
            put_u16(&mut out, idx.protos[&m.proto] as u16);
            put_u32(&mut out, idx.string(&m.name));
        }
        for (class, &cd_off) in self.classes.iter().zip(&class_data_off) {
            put_u32(&mut out, idx.type_(&class.descriptor));
            put_u32(&mut out, ACC_PUBLIC);
            put_u32(&mut out, idx.type_(&class.superclass));
            put_u32(&mut out, 0); // interfaces_off
            put_u32(&mut out, crate::dex::NO_INDEX); // source_file_idx
            put_u32(&mut out, 0); // annotations_off
            put_u32(&mut out, cd_off);
            put_u32(&mut out, 0); // static_values_off
        }
        debug_assert_eq!(out.len(), data_off);
        out.extend(data);

        let signature = Sha1::digest(&out[32..]);
        out[12..32].copy_from_slice(&signature);
        let checksum = adler32(&out[12..]);
        out[8..12].copy_from_slice(&checksum.to_le_bytes());
        Ok(out)
    }
}
