//! Bit-string helpers shared by the key stores, the AMD code and the wire.

use bitvec::prelude::*;

/// A bit string, packed MSB-first into bytes.
pub type Bits = BitVec<u8, Msb0>;

/// Hex rendering of a bit string: bits are packed MSB-first into nibbles and
/// the final nibble is zero-padded on the right. The empty string renders as "".
pub fn to_hex(bits: &BitSlice<u8, Msb0>) -> String {
    bits.chunks(4)
        .map(|nib| {
            let v = nib
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, b)| acc | ((*b as u32) << (3 - i)));
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

/// Inverse of [`to_hex`]: reads `len` bits from the hex digits.
pub fn from_hex(hex: &str, len: usize) -> Option<Bits> {
    let hex = hex.trim();
    if hex.len() != len.div_ceil(4) {
        return None;
    }
    let mut out = Bits::with_capacity(len);
    for c in hex.chars() {
        let v = c.to_digit(16)?;
        for i in (0..4).rev() {
            out.push((v >> i) & 1 == 1);
        }
    }
    // padding bits must be zero
    if out[len..].any() {
        return None;
    }
    out.truncate(len);
    Some(out)
}

pub fn xor_all<'a, I>(bits: I) -> bool
where
    I: IntoIterator<Item = &'a bool>,
{
    bits.into_iter().fold(false, |acc, b| acc ^ b)
}
