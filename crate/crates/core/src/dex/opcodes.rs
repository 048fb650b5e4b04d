//! Dalvik instruction widths and the opcode families tracked by the feature
//! extractor.
//!
//! Only the information needed to walk an instruction stream linearly is kept:
//! the width of every opcode in 16-bit code units and whether the opcode is
//! assigned at all. Operands are never interpreted.

use serde::{Deserialize, Serialize};

/// Opcode groups counted as features. Every other opcode is still counted
/// towards the instruction total but has no family of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpcodeFamily {
    Nop,
    Goto,
    Invoke,
    If,
    Move,
}

impl OpcodeFamily {
    /// Frozen feature order.
    pub const ALL: [OpcodeFamily; 5] = [
        OpcodeFamily::Nop,
        OpcodeFamily::Goto,
        OpcodeFamily::Invoke,
        OpcodeFamily::If,
        OpcodeFamily::Move,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OpcodeFamily::Nop => "nop",
            OpcodeFamily::Goto => "goto",
            OpcodeFamily::Invoke => "invoke",
            OpcodeFamily::If => "if",
            OpcodeFamily::Move => "move",
        }
    }

    /// Family of a (non-payload) opcode byte.
    ///
    /// invoke covers `invoke-*` including `/range`, polymorphic and custom
    /// forms; if covers both two-register and zero-test forms; move covers
    /// `move*`, `move-result*` and `move-exception`.
    pub fn of(opcode: u8) -> Option<OpcodeFamily> {
        match opcode {
            0x00 => Some(OpcodeFamily::Nop),
            0x01..=0x0d => Some(OpcodeFamily::Move),
            0x28..=0x2a => Some(OpcodeFamily::Goto),
            0x32..=0x3d => Some(OpcodeFamily::If),
            0x6e..=0x72 | 0x74..=0x78 | 0xfa..=0xfd => Some(OpcodeFamily::Invoke),
            _ => None,
        }
    }
}

/// Width in code units of a regular instruction, or `None` for opcodes that
/// are unassigned in DEX versions 035 through 039.
pub fn instruction_width(opcode: u8) -> Option<usize> {
    let width = match opcode {
        0x00 | 0x01 | 0x04 | 0x07 | 0x0a..=0x12 => 1,
        0x02 | 0x05 | 0x08 => 2,
        0x03 | 0x06 | 0x09 => 3,
        0x13 | 0x15 | 0x16 | 0x19 | 0x1a | 0x1c => 2,
        0x14 | 0x17 | 0x1b => 3,
        0x18 => 5,
        0x1d | 0x1e | 0x21 | 0x27 | 0x28 => 1,
        0x1f | 0x20 | 0x22 | 0x23 | 0x29 => 2,
        0x24..=0x26 | 0x2a..=0x2c => 3,
        0x2d..=0x3d => 2,
        0x3e..=0x43 => return None,
        0x44..=0x6d => 2,
        0x6e..=0x72 => 3,
        0x73 => return None,
        0x74..=0x78 => 3,
        0x79 | 0x7a => return None,
        0x7b..=0x8f => 1,
        0x90..=0xaf => 2,
        0xb0..=0xcf => 1,
        0xd0..=0xe2 => 2,
        0xe3..=0xf9 => return None,
        0xfa | 0xfb => 4,
        0xfc | 0xfd => 3,
        0xfe | 0xff => 2,
    };
    Some(width)
}

/// Pseudo-instruction idents carried in the high byte of a `nop` unit.
pub const PACKED_SWITCH_PAYLOAD: u16 = 0x0100;
pub const SPARSE_SWITCH_PAYLOAD: u16 = 0x0200;
pub const FILL_ARRAY_DATA_PAYLOAD: u16 = 0x0300;

/// Result of decoding one position of an instruction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Instruction { opcode: u8, width: usize },
    /// Switch or array data table; skipped, not counted as an instruction.
    Payload { width: usize },
}

/// Decodes the unit at `pos`. Returns `None` when the opcode is unassigned or
/// the instruction would run past the end of `insns`.
pub fn decode_at(insns: &[u16], pos: usize) -> Option<Decoded> {
    let unit = *insns.get(pos)?;
    let opcode = (unit & 0xff) as u8;
    let decoded = if opcode == 0x00 && unit != 0 {
        let header = |i: usize| insns.get(pos + i).copied().map(usize::from);
        let width = match unit {
            PACKED_SWITCH_PAYLOAD => header(1)? * 2 + 4,
            SPARSE_SWITCH_PAYLOAD => header(1)? * 4 + 2,
            FILL_ARRAY_DATA_PAYLOAD => {
                let element_width = header(1)?;
                let size = header(2)? | (header(3)? << 16);
                size.checked_mul(element_width)?.div_ceil(2) + 4
            }
            // nop with a junk high byte
            _ => 1,
        };
        if width == 1 {
            Decoded::Instruction { opcode, width }
        } else {
            Decoded::Payload { width }
        }
    } else {
        Decoded::Instruction { opcode, width: instruction_width(opcode)? }
    };
    let width = match decoded {
        Decoded::Instruction { width, .. } | Decoded::Payload { width } => width,
    };
    (pos.checked_add(width)? <= insns.len()).then_some(decoded)
}
