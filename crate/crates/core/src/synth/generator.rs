use std::collections::HashSet;
use std::io::{Cursor, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dex::{NameBag, OpcodeFamily, OpcodeHistogram, SymbolTable};

use super::builder::{
    ClassSpec, CodeSpec, DexBuilder, FieldRef, FieldSpec, Insn, MethodRef, MethodSpec, ProtoSig,
    ACC_CONSTRUCTOR, ACC_PUBLIC, ACC_STATIC, OBJECT,
};
use super::names::{unique_name, unique_string, weighted_index, NameKind};
use super::profile::GenerationProfile;
use super::SynthError;

const STRING: &str = "Ljava/lang/String;";
const LOG: &str = "Landroid/util/Log;";

/// Generated DEX files of one app plus the symbol table they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedApp {
    /// `classes.dex`, `classes2.dex`, ... in order.
    pub dex: Vec<Vec<u8>>,
    pub declared: SymbolTable,
}

impl GeneratedApp {
    pub fn apk_bytes(&self) -> Result<Vec<u8>, SynthError> {
        write_apk(&self.dex)
    }
}

/// Single-file generation. The profile must ask for exactly one DEX file.
pub fn generate_dex(profile: &GenerationProfile) -> Result<(Vec<u8>, SymbolTable), SynthError> {
    if profile.dex_files != 1 {
        return Err(SynthError::ProfileInfeasible(format!(
            "generate_dex needs dex_files = 1, got {}",
            profile.dex_files
        )));
    }
    let mut app = generate_app(profile)?;
    Ok((app.dex.remove(0), app.declared))
}

struct PlannedClass {
    descriptor: String,
    simple_name: String,
    fields: Vec<FieldSpec>,
    methods: Vec<String>,
    strings: Vec<String>,
}

fn object_init() -> MethodRef {
    MethodRef {
        class: OBJECT.into(),
        name: "<init>".into(),
        proto: ProtoSig::void(),
    }
}

fn log_d() -> MethodRef {
    MethodRef {
        class: LOG.into(),
        name: "d".into(),
        proto: ProtoSig {
            return_type: "I".into(),
            params: vec![STRING.into(), STRING.into()],
        },
    }
}

fn object_hash_code() -> MethodRef {
    MethodRef {
        class: OBJECT.into(),
        name: "hashCode".into(),
        proto: ProtoSig {
            return_type: "I".into(),
            params: Vec::new(),
        },
    }
}

/// Instruction family under which the generator files `insn`.
fn declared_family(insn: &Insn) -> Option<OpcodeFamily> {
    match insn {
        Insn::Nop => Some(OpcodeFamily::Nop),
        Insn::Goto | Insn::Goto16 | Insn::Goto32 => Some(OpcodeFamily::Goto),
        Insn::IfEq | Insn::IfEqz | Insn::IfLtz => Some(OpcodeFamily::If),
        Insn::Move | Insn::MoveObject | Insn::MoveFrom16 | Insn::MoveResult => {
            Some(OpcodeFamily::Move)
        }
        Insn::InvokeStatic(_)
        | Insn::InvokeStaticRange(_)
        | Insn::InvokeVirtual(_)
        | Insn::InvokeDirect(..)
        | Insn::InvokeStatic2(_) => Some(OpcodeFamily::Invoke),
        _ => None,
    }
}

struct BodyContext<'a> {
    methods: &'a [MethodRef],
    fields: &'a [FieldRef],
    strings: &'a [String],
}

fn sample_insn<R: Rng>(rng: &mut R, family: usize, ctx: &BodyContext<'_>) -> Insn {
    match family {
        0 => Insn::Nop,
        1 => match rng.gen_range(0..10) {
            0..=6 => Insn::Goto,
            7 | 8 => Insn::Goto16,
            _ => Insn::Goto32,
        },
        2 => {
            let own = ctx.methods.choose(rng);
            match (rng.gen_range(0..20), own) {
                (0..=9, Some(m)) => Insn::InvokeStatic(m.clone()),
                (10..=12, Some(m)) => Insn::InvokeStaticRange(m.clone()),
                (13..=16, _) => Insn::InvokeStatic2(log_d()),
                _ => Insn::InvokeVirtual(object_hash_code()),
            }
        }
        3 => [Insn::IfEq, Insn::IfEqz, Insn::IfLtz][rng.gen_range(0..3)].clone(),
        4 => [Insn::Move, Insn::MoveObject, Insn::MoveFrom16, Insn::MoveResult]
            [rng.gen_range(0..4)]
        .clone(),
        _ => match rng.gen_range(0..5) {
            0 if !ctx.strings.is_empty() => {
                Insn::ConstString(ctx.strings[rng.gen_range(0..ctx.strings.len())].clone())
            }
            1 if !ctx.fields.is_empty() => {
                Insn::StaticGet(ctx.fields[rng.gen_range(0..ctx.fields.len())].clone())
            }
            2 => Insn::AddInt,
            3 => Insn::AddInt2Addr,
            _ => Insn::Const4,
        },
    }
}

fn sample_body<R: Rng>(rng: &mut R, p: &GenerationProfile, ctx: &BodyContext<'_>) -> Vec<Insn> {
    let m = p.instructions_per_method;
    let len = if m == 0 {
        0
    } else {
        rng.gen_range((m / 2).max(1)..=(m * 3 / 2).max(1))
    };
    let mix = p.instruction_mix.as_array();
    let junk_weights = [p.instruction_mix.nop, p.instruction_mix.goto];
    let mut insns = Vec::with_capacity(len * 2 + 1);
    for _ in 0..len {
        let family = weighted_index(rng, &mix);
        insns.push(sample_insn(rng, family, ctx));
        if rng.gen_bool(p.junk_instruction_rate) {
            let junk = weighted_index(rng, &junk_weights);
            insns.push(sample_insn(rng, junk, ctx));
        }
    }
    insns.push(Insn::ReturnVoid);
    insns
}

fn tally(insns: &[Insn], counts: &mut OpcodeHistogram, total: &mut u64) {
    for insn in insns {
        *total += 1;
        if let Some(f) = declared_family(insn) {
            counts.add(f, 1);
        }
    }
}

/// Builds the app described by `profile`. Deterministic in `profile.seed`.
pub fn generate_app(profile: &GenerationProfile) -> Result<GeneratedApp, SynthError> {
    profile.validate()?;
    let p = profile;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let n_packages = p.n_classes.div_ceil(8).max(1);
    let mut used_packages = HashSet::new();
    let packages: Vec<String> = (0..n_packages)
        .map(|_| {
            let a = unique_name(&mut rng, p, NameKind::Package, &mut used_packages);
            format!("com/{a}")
        })
        .collect();

    let mut used_class_names: Vec<HashSet<String>> = vec![HashSet::new(); n_packages];
    let mut planned = Vec::with_capacity(p.n_classes);
    for _ in 0..p.n_classes {
        let pkg = rng.gen_range(0..n_packages);
        let simple_name = unique_name(&mut rng, p, NameKind::Class, &mut used_class_names[pkg]);
        let descriptor = format!("L{}/{};", packages[pkg], simple_name);
        let mut used_fields = HashSet::new();
        let fields = (0..p.n_fields_per_class)
            .map(|_| FieldSpec {
                name: unique_name(&mut rng, p, NameKind::Field, &mut used_fields),
                type_desc: if rng.gen_bool(0.5) { "I" } else { STRING }.into(),
            })
            .collect();
        let mut used_methods: HashSet<String> = ["<init>".to_string()].into();
        let methods = (0..p.n_methods_per_class)
            .map(|_| unique_name(&mut rng, p, NameKind::Method, &mut used_methods))
            .collect();
        planned.push(PlannedClass {
            descriptor,
            simple_name,
            fields,
            methods,
            strings: Vec::new(),
        });
    }

    // Program strings must stay clear of every descriptor, shorty and member
    // name, or the pool would merge them with structural entries.
    let mut reserved: HashSet<String> = [OBJECT, STRING, LOG, "V", "I", "ILL", "<init>", "d", "hashCode"]
        .into_iter()
        .map(String::from)
        .collect();
    for c in &planned {
        reserved.insert(c.descriptor.clone());
        reserved.extend(c.fields.iter().map(|f| f.name.clone()));
        reserved.extend(c.methods.iter().cloned());
    }
    let mut used_strings = HashSet::new();
    for c in &mut planned {
        c.strings = (0..p.n_strings_per_class)
            .map(|_| unique_string(&mut rng, p.string_profile, &mut used_strings, &reserved))
            .collect();
    }

    let n_dex = p.dex_files;
    let chunk = p.n_classes.div_ceil(n_dex).max(1);
    let mut dex_files = Vec::with_capacity(n_dex);
    let mut declared = SymbolTable::default();
    for d in 0..n_dex {
        let lo = (d * chunk).min(planned.len());
        let hi = ((d + 1) * chunk).min(planned.len());
        let group = &planned[lo..hi];

        let methods: Vec<MethodRef> = group
            .iter()
            .flat_map(|c| {
                c.methods.iter().map(|name| MethodRef {
                    class: c.descriptor.clone(),
                    name: name.clone(),
                    proto: ProtoSig::void(),
                })
            })
            .collect();
        let fields: Vec<FieldRef> = group
            .iter()
            .flat_map(|c| {
                c.fields.iter().map(|f| FieldRef {
                    class: c.descriptor.clone(),
                    name: f.name.clone(),
                    type_desc: f.type_desc.clone(),
                })
            })
            .collect();
        let strings: Vec<String> = group.iter().flat_map(|c| c.strings.iter().cloned()).collect();
        let ctx = BodyContext {
            methods: &methods,
            fields: &fields,
            strings: &strings,
        };

        let mut builder = DexBuilder::new();
        builder.extra_strings = strings.clone();
        builder.extra_types = vec![STRING.into(), LOG.into()];
        let mut opcode_counts = OpcodeHistogram::default();
        let mut total_instructions = 0u64;
        for c in group {
            let mut class = ClassSpec::new(c.descriptor.clone());
            class.fields = c.fields.clone();
            let init = vec![Insn::InvokeDirect(object_init(), 3), Insn::ReturnVoid];
            tally(&init, &mut opcode_counts, &mut total_instructions);
            class.methods.push(MethodSpec {
                name: "<init>".into(),
                proto: ProtoSig::void(),
                access: ACC_PUBLIC | ACC_CONSTRUCTOR,
                code: Some(CodeSpec {
                    registers: 4,
                    ins: 1,
                    outs: 1,
                    insns: init,
                }),
            });
            for name in &c.methods {
                let insns = sample_body(&mut rng, p, &ctx);
                tally(&insns, &mut opcode_counts, &mut total_instructions);
                class.methods.push(MethodSpec {
                    name: name.clone(),
                    proto: ProtoSig::void(),
                    access: ACC_PUBLIC | ACC_STATIC,
                    code: Some(CodeSpec {
                        registers: 4,
                        ins: 0,
                        outs: 2,
                        insns,
                    }),
                });
            }
            builder.classes.push(class);
        }
        dex_files.push(builder.build()?);

        declared.merge(&SymbolTable {
            class_names: group.iter().map(|c| c.simple_name.as_str()).collect(),
            method_names: group.iter().flat_map(|c| c.methods.iter().map(String::as_str)).collect(),
            field_names: group
                .iter()
                .flat_map(|c| c.fields.iter().map(|f| f.name.as_str()))
                .collect(),
            other_strings: strings.iter().map(String::as_str).collect::<NameBag>(),
            opcode_counts,
            total_instructions,
        });
    }

    Ok(GeneratedApp {
        dex: dex_files,
        declared,
    })
}

const MANIFEST_STUB: &[u8] = b"<?xml version=\"1.0\" encoding=\"utf-8\"?>\n\
<manifest xmlns:android=\"http://schemas.android.com/apk/res/android\" package=\"synthetic.app\"/>\n";

/// Wraps DEX payloads in a ZIP archive with fixed timestamps, so equal inputs
/// give equal bytes.
pub fn write_apk(dex_files: &[Vec<u8>]) -> Result<Vec<u8>, SynthError> {
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    let zip_err = |e: zip::result::ZipError| SynthError::Archive(e.to_string());
    zip.start_file("AndroidManifest.xml", options).map_err(zip_err)?;
    zip.write_all(MANIFEST_STUB)?;
    for (i, dex) in dex_files.iter().enumerate() {
        let name = if i == 0 {
            "classes.dex".to_string()
        } else {
            format!("classes{}.dex", i + 1)
        };
        zip.start_file(name, options).map_err(zip_err)?;
        zip.write_all(dex)?;
    }
    Ok(zip.finish().map_err(zip_err)?.into_inner())
}
