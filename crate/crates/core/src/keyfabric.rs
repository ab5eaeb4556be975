//! Pairwise one-time-pad key stores standing in for the QKD layer.
//!
//! Every unordered pair `{i, j}` (with `i < j`) holds two copies of a shared
//! secret string: `copy_a` belongs to the lower-indexed party and `copy_b`
//! to the higher one. With a nonzero error rate, `copy_b` differs from
//! `copy_a` by independent bit flips. Each side consumes its copy through
//! its own cursor; bits are never handed out twice.
//!
//! # File format
//!
//! All integers are big-endian.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `QKFB`                            |
//! | 4      | 2    | version (`1`)                           |
//! | 6      | 2    | party count `n`                         |
//! | 8      | 8    | bits per pair `L`                       |
//! | 16     | 8    | error rate, IEEE-754 binary64           |
//! | 24     | 8    | seed                                    |
//! | 32     | ...  | `n(n-1)/2` pair records, `(i, j)` in lexicographic order |
//!
//! A pair record is `u16 i`, `u16 j`, then `copy_a` and `copy_b`, each
//! `ceil(L/8)` bytes, packed MSB-first with zero padding in the last byte.
//! Cursors are not persisted: a loaded fabric is always fresh.

use std::fmt;
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use bitvec::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::bits::Bits;

pub const FABRIC_MAGIC: &[u8; 4] = b"QKFB";
pub const FABRIC_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

/// Index of a participant within a session.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PartyId(pub u8);

impl PartyId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// All parties `0..n` in ascending order.
    pub fn all(n: usize) -> impl Iterator<Item = PartyId> + Clone {
        (0..n).map(|i| PartyId(i as u8))
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("invalid fabric parameters: {0}")]
    InvalidParams(String),
    #[error("keys depleted between {me} and {peer}: requested {requested}, remaining {remaining}")]
    KeysDepleted {
        me: PartyId,
        peer: PartyId,
        requested: usize,
        remaining: usize,
    },
    #[error("no key store between {0} and {1}")]
    UnknownPair(PartyId, PartyId),
    #[error("malformed fabric file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The two copies of one pair's shared secret and their consumption cursors.
#[derive(Debug)]
pub struct PairKey {
    low: PartyId,
    high: PartyId,
    copy_a: Bits,
    copy_b: Bits,
    cursor_a: AtomicUsize,
    cursor_b: AtomicUsize,
}

impl PairKey {
    pub fn new(low: PartyId, high: PartyId, mut copy_a: Bits, mut copy_b: Bits) -> Result<Self, KeyError> {
        if low >= high {
            return Err(KeyError::InvalidParams(format!("pair ({low}, {high}) not ordered")));
        }
        if copy_a.len() != copy_b.len() {
            return Err(KeyError::InvalidParams(format!(
                "pair ({low}, {high}) copies differ in length"
            )));
        }
        // the file format needs zero padding in the last byte
        copy_a.set_uninitialized(false);
        copy_b.set_uninitialized(false);
        Ok(PairKey {
            low,
            high,
            copy_a,
            copy_b,
            cursor_a: AtomicUsize::new(0),
            cursor_b: AtomicUsize::new(0),
        })
    }

    pub fn parties(&self) -> (PartyId, PartyId) {
        (self.low, self.high)
    }

    pub fn copy_a(&self) -> &BitSlice<u8, Msb0> {
        &self.copy_a
    }

    pub fn copy_b(&self) -> &BitSlice<u8, Msb0> {
        &self.copy_b
    }

    pub fn len(&self) -> usize {
        self.copy_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.copy_a.is_empty()
    }

    /// Bits consumed by the low and high side respectively.
    pub fn cursors(&self) -> (usize, usize) {
        (
            self.cursor_a.load(Ordering::Acquire),
            self.cursor_b.load(Ordering::Acquire),
        )
    }

    /// Number of positions where the two copies disagree.
    pub fn mismatches(&self) -> usize {
        (self.copy_a.clone() ^ &self.copy_b).count_ones()
    }

    fn side(&self, me: PartyId) -> (&Bits, &AtomicUsize) {
        if me == self.low {
            (&self.copy_a, &self.cursor_a)
        } else {
            (&self.copy_b, &self.cursor_b)
        }
    }
}

/// All pairwise key stores of an `n`-party session.
#[derive(Debug)]
pub struct KeyFabric {
    n: usize,
    bits_per_pair: usize,
    error_rate: f64,
    seed: u64,
    pairs: Vec<PairKey>,
}

/// Position of pair `(i, j)`, `i < j`, in lexicographic order.
fn pair_slot(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn check_params(n: usize, error_rate: f64) -> Result<(), KeyError> {
    if !(3..=255).contains(&n) {
        return Err(KeyError::InvalidParams(format!("party count {n} outside 3..=255")));
    }
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(KeyError::InvalidParams(format!(
            "error rate {error_rate} outside [0, 1]"
        )));
    }
    Ok(())
}

impl KeyFabric {
    /// Generates a fabric from one seeded generator. `copy_b` is `copy_a`
    /// with each bit flipped independently with probability `error_rate`.
    pub fn generate(n: usize, bits_per_pair: usize, error_rate: f64, seed: u64) -> Result<Self, KeyError> {
        check_params(n, error_rate)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        let mut bytes = vec![0u8; bits_per_pair.div_ceil(8)];
        for i in 0..n {
            for j in i + 1..n {
                rng.fill_bytes(&mut bytes);
                let mut copy_a = Bits::from_vec(bytes.clone());
                copy_a.truncate(bits_per_pair);
                let mut copy_b = copy_a.clone();
                if error_rate > 0.0 {
                    for mut bit in copy_b.iter_mut() {
                        if rng.gen_bool(error_rate) {
                            *bit = !*bit;
                        }
                    }
                }
                pairs.push(PairKey::new(PartyId(i as u8), PartyId(j as u8), copy_a, copy_b)?);
            }
        }
        Ok(KeyFabric {
            n,
            bits_per_pair,
            error_rate,
            seed,
            pairs,
        })
    }

    /// Builds a fabric from explicit pair contents, in lexicographic pair order.
    pub fn from_pairs(n: usize, pairs: Vec<(Bits, Bits)>) -> Result<Self, KeyError> {
        check_params(n, 0.0)?;
        if pairs.len() != n * (n - 1) / 2 {
            return Err(KeyError::InvalidParams(format!(
                "expected {} pairs, got {}",
                n * (n - 1) / 2,
                pairs.len()
            )));
        }
        let bits_per_pair = pairs.first().map_or(0, |p| p.0.len());
        let mut it = pairs.into_iter();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = it.next().expect("length checked");
                if a.len() != bits_per_pair {
                    return Err(KeyError::InvalidParams("pairs differ in length".into()));
                }
                out.push(PairKey::new(PartyId(i as u8), PartyId(j as u8), a, b)?);
            }
        }
        let error_rate = {
            let flips: usize = out.iter().map(PairKey::mismatches).sum();
            let total = out.len() * bits_per_pair;
            if total == 0 { 0.0 } else { flips as f64 / total as f64 }
        };
        Ok(KeyFabric {
            n,
            bits_per_pair,
            error_rate,
            seed: 0,
            pairs: out,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits_per_pair(&self) -> usize {
        self.bits_per_pair
    }

    pub fn error_rate(&self) -> f64 {
        self.error_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pairs(&self) -> &[PairKey] {
        &self.pairs
    }

    pub fn pair(&self, a: PartyId, b: PartyId) -> Result<&PairKey, KeyError> {
        let (i, j) = (a.index().min(b.index()), a.index().max(b.index()));
        if i == j || j >= self.n {
            return Err(KeyError::UnknownPair(a, b));
        }
        Ok(&self.pairs[pair_slot(self.n, i, j)])
    }

    /// Returns the next `count` bits of `me`'s copy and advances `me`'s cursor.
    pub fn draw_bits(&self, me: PartyId, peer: PartyId, count: usize) -> Result<Bits, KeyError> {
        let pair = self.pair(me, peer)?;
        let (copy, cursor) = pair.side(me);
        let len = copy.len();
        let start = cursor
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |cur| {
                (cur + count <= len).then_some(cur + count)
            })
            .map_err(|cur| KeyError::KeysDepleted {
                me,
                peer,
                requested: count,
                remaining: len - cur,
            })?;
        Ok(copy[start..start + count].to_bitvec())
    }

    /// Draws a single bit.
    pub fn draw_bit(&self, me: PartyId, peer: PartyId) -> Result<bool, KeyError> {
        Ok(self.draw_bits(me, peer, 1)?[0])
    }

    /// Bits not yet consumed on `me`'s side of the pair.
    pub fn remaining(&self, me: PartyId, peer: PartyId) -> Result<usize, KeyError> {
        let pair = self.pair(me, peer)?;
        let (copy, cursor) = pair.side(me);
        Ok(copy.len() - cursor.load(Ordering::Acquire))
    }

    /// Network-wide consumption: per pair, the furthest cursor of its two
    /// sides, summed over all pairs.
    pub fn consumed_total(&self) -> u64 {
        self.pairs
            .iter()
            .map(|p| {
                let (a, b) = p.cursors();
                a.max(b) as u64
            })
            .sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), KeyError> {
        w.write_all(FABRIC_MAGIC)?;
        w.write_all(&FABRIC_VERSION.to_be_bytes())?;
        w.write_all(&(self.n as u16).to_be_bytes())?;
        w.write_all(&(self.bits_per_pair as u64).to_be_bytes())?;
        w.write_all(&self.error_rate.to_bits().to_be_bytes())?;
        w.write_all(&self.seed.to_be_bytes())?;
        for p in &self.pairs {
            w.write_all(&(p.low.0 as u16).to_be_bytes())?;
            w.write_all(&(p.high.0 as u16).to_be_bytes())?;
            w.write_all(p.copy_a.as_raw_slice())?;
            w.write_all(p.copy_b.as_raw_slice())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, KeyError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[0..4] != FABRIC_MAGIC {
            return Err(KeyError::Format("bad magic".into()));
        }
        let be16 = |o: usize| u16::from_be_bytes([header[o], header[o + 1]]);
        let be64 = |o: usize| u64::from_be_bytes(header[o..o + 8].try_into().unwrap());
        let version = be16(4);
        if version != FABRIC_VERSION {
            return Err(KeyError::Format(format!("unsupported version {version}")));
        }
        let n = be16(6) as usize;
        let bits_per_pair = usize::try_from(be64(8)).map_err(|_| KeyError::Format("length".into()))?;
        let error_rate = f64::from_bits(be64(16));
        let seed = be64(24);
        check_params(n, error_rate)?;

        let nbytes = bits_per_pair.div_ceil(8);
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let mut ids = [0u8; 4];
                r.read_exact(&mut ids)?;
                let (ri, rj) = (
                    u16::from_be_bytes([ids[0], ids[1]]) as usize,
                    u16::from_be_bytes([ids[2], ids[3]]) as usize,
                );
                if (ri, rj) != (i, j) {
                    return Err(KeyError::Format(format!(
                        "expected pair ({i}, {j}), found ({ri}, {rj})"
                    )));
                }
                let mut read_copy = || -> Result<Bits, KeyError> {
                    let mut buf = vec![0u8; nbytes];
                    r.read_exact(&mut buf)?;
                    let mut bits = Bits::from_vec(buf);
                    if bits[bits_per_pair..].any() {
                        return Err(KeyError::Format("nonzero padding".into()));
                    }
                    bits.truncate(bits_per_pair);
                    Ok(bits)
                };
                let a = read_copy()?;
                let b = read_copy()?;
                pairs.push(PairKey::new(PartyId(i as u8), PartyId(j as u8), a, b)?);
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(KeyError::Format("trailing bytes".into()));
        }
        Ok(KeyFabric {
            n,
            bits_per_pair,
            error_rate,
            seed,
            pairs,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        Self::read_from(bytes)
    }
}
