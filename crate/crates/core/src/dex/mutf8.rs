//! Modified UTF-8 as used by DEX `string_data_item`s.
//!
//! Differences from UTF-8: U+0000 is encoded as `C0 80`, and supplementary
//! characters are written as two 3-byte encoded UTF-16 surrogates.

/// Decodes a NUL-terminated MUTF-8 string starting at `bytes[0]`.
///
/// Returns the decoded text and the number of bytes consumed, excluding the
/// terminator. `None` on malformed sequences, unpaired surrogates or a missing
/// terminator.
pub fn decode(bytes: &[u8]) -> Option<(String, usize)> {
    let mut units: Vec<u16> = Vec::new();
    let mut i = 0;
    loop {
        let b0 = *bytes.get(i)?;
        match b0 {
            0x00 => break,
            0x01..=0x7f => {
                units.push(u16::from(b0));
                i += 1;
            }
            0xc0..=0xdf => {
                let b1 = continuation(bytes, i + 1)?;
                units.push((u16::from(b0 & 0x1f) << 6) | b1);
                i += 2;
            }
            0xe0..=0xef => {
                let b1 = continuation(bytes, i + 1)?;
                let b2 = continuation(bytes, i + 2)?;
                units.push((u16::from(b0 & 0x0f) << 12) | (b1 << 6) | b2);
                i += 3;
            }
            _ => return None,
        }
    }
    String::from_utf16(&units).ok().map(|s| (s, i))
}

fn continuation(bytes: &[u8], at: usize) -> Option<u16> {
    let b = *bytes.get(at)?;
    (b & 0xc0 == 0x80).then_some(u16::from(b & 0x3f))
}

/// Encodes `text` as MUTF-8 without the terminator.
pub fn encode(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for unit in text.encode_utf16() {
        match unit {
            0x0001..=0x007f => out.push(unit as u8),
            0x0000 | 0x0080..=0x07ff => {
                out.push(0xc0 | (unit >> 6) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
            _ => {
                out.push(0xe0 | (unit >> 12) as u8);
                out.push(0x80 | ((unit >> 6) & 0x3f) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
        }
    }
    out
}

/// Length in UTF-16 code units, as stored in the `utf16_size` field.
pub fn utf16_len(text: &str) -> usize {
    text.encode_utf16().count()
}
