//! Binary polynomials over GF(2) and the extension fields GF(2^γ) they define.
//!
//! Polynomials are packed into a `u128`, bit `i` holding the coefficient of
//! `x^i`. Field moduli are limited to degree 64 so that the product of two
//! reduced elements always fits before reduction.

use std::fmt;
use std::ops::{Add, BitXor};
use std::str::FromStr;

use thiserror::Error;

/// Largest supported field degree.
pub const MAX_GAMMA: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("modulus degree {0} outside 1..={MAX_GAMMA}")]
    UnsupportedDegree(i64),
    #[error("modulus {0} is reducible over GF(2)")]
    Reducible(BinPoly),
    #[error("cannot parse polynomial {0:?}")]
    Parse(String),
    #[error("product degree {0} overflows 127")]
    Overflow(u32),
}

/// A polynomial in GF(2)[x].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BinPoly(u128);

impl BinPoly {
    pub const ZERO: BinPoly = BinPoly(0);
    pub const ONE: BinPoly = BinPoly(1);
    pub const X: BinPoly = BinPoly(2);

    pub const fn from_raw(bits: u128) -> Self {
        BinPoly(bits)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    /// `x^k`.
    pub fn monomial(k: u32) -> Self {
        assert!(k < 128, "monomial degree {k} does not fit");
        BinPoly(1u128 << k)
    }

    /// Builds a polynomial from coefficient bits, most significant first:
    /// `bits[0]` multiplies `x^(len-1)` and the last bit is the constant term.
    pub fn from_msb_bits<I>(bits: I) -> Self
    where
        I: IntoIterator<Item = bool>,
    {
        let mut acc = 0u128;
        for bit in bits {
            assert!(acc >> 127 == 0, "more than 128 coefficients");
            acc = (acc << 1) | bit as u128;
        }
        BinPoly(acc)
    }

    /// The `width` low coefficients, most significant first.
    pub fn to_msb_bits(self, width: u32) -> Vec<bool> {
        (0..width).rev().map(|i| self.coeff(i)).collect()
    }

    pub fn coeff(self, i: u32) -> bool {
        i < 128 && (self.0 >> i) & 1 == 1
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Degree, or `None` for the zero polynomial (degree −∞).
    pub fn degree(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(127 - self.0.leading_zeros())
        }
    }

    /// Carry-less product. Fails if the result would exceed degree 127.
    pub fn checked_mul(self, rhs: BinPoly) -> Result<BinPoly, Gf2Error> {
        match (self.degree(), rhs.degree()) {
            (None, _) | (_, None) => Ok(BinPoly::ZERO),
            (Some(da), Some(db)) if da + db > 127 => Err(Gf2Error::Overflow(da + db)),
            _ => {
                let (mut a, mut b, mut acc) = (self.0, rhs.0, 0u128);
                while b != 0 {
                    if b & 1 == 1 {
                        acc ^= a;
                    }
                    a <<= 1;
                    b >>= 1;
                }
                Ok(BinPoly(acc))
            }
        }
    }

    /// Quotient and remainder of long division. Panics on a zero divisor.
    pub fn div_rem(self, divisor: BinPoly) -> (BinPoly, BinPoly) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let (mut q, mut r) = (0u128, self.0);
        while let Some(dr) = BinPoly(r).degree() {
            if dr < dd {
                break;
            }
            let shift = dr - dd;
            q |= 1u128 << shift;
            r ^= divisor.0 << shift;
        }
        (BinPoly(q), BinPoly(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn rem(self, divisor: BinPoly) -> BinPoly {
        self.div_rem(divisor).1
    }

    pub fn gcd(self, other: BinPoly) -> BinPoly {
        let (mut a, mut b) = (self, other);
        while !b.is_zero() {
            let r = a.rem(b);
            a = b;
            b = r;
        }
        a
    }

    /// Lower-case hex of the coefficient integer, MSB-first, no prefix.
    pub fn to_hex(self) -> String {
        format!("{:x}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, Gf2Error> {
        let digits = s.trim().trim_start_matches("0x").trim_start_matches("0X");
        u128::from_str_radix(digits, 16)
            .map(BinPoly)
            .map_err(|_| Gf2Error::Parse(s.to_string()))
    }
}

impl BitXor for BinPoly {
    type Output = BinPoly;
    fn bitxor(self, rhs: BinPoly) -> BinPoly {
        BinPoly(self.0 ^ rhs.0)
    }
}

impl Add for BinPoly {
    type Output = BinPoly;
    // addition in GF(2)[x] is XOR
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: BinPoly) -> BinPoly {
        self ^ rhs
    }
}

/// Coefficient-wise XOR.
pub fn add(a: BinPoly, b: BinPoly) -> BinPoly {
    a ^ b
}

impl fmt::Display for BinPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(deg) = self.degree() else {
            return f.write_str("0");
        };
        let mut first = true;
        for i in (0..=deg).rev().filter(|&i| self.coeff(i)) {
            if !first {
                f.write_str("+")?;
            }
            first = false;
            match i {
                0 => f.write_str("1")?,
                1 => f.write_str("x")?,
                _ => write!(f, "x^{i}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for BinPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinPoly({self})")
    }
}

impl FromStr for BinPoly {
    type Err = Gf2Error;

    /// Accepts `x^22+x+1` style sums of monomials or `0x`-prefixed hex.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with("0x") || s.starts_with("0X") {
            return BinPoly::from_hex(s);
        }
        let err = || Gf2Error::Parse(s.to_string());
        if s.is_empty() {
            return Err(err());
        }
        let mut acc = 0u128;
        for term in s.split('+').map(|t| t.trim()) {
            let exp: u32 = match term {
                "0" => continue,
                "1" => 0,
                "x" => 1,
                t => t
                    .strip_prefix("x^")
                    .and_then(|e| e.parse().ok())
                    .filter(|&e| e < 128)
                    .ok_or_else(err)?,
            };
            // repeated terms cancel, as they would in GF(2)
            acc ^= 1u128 << exp;
        }
        Ok(BinPoly(acc))
    }
}

/// The field GF(2^γ) defined by an irreducible modulus of degree γ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldCtx {
    gamma: u32,
    modulus: BinPoly,
}

impl FieldCtx {
    /// Uses an explicitly supplied modulus, which must be irreducible.
    pub fn new(modulus: BinPoly) -> Result<Self, Gf2Error> {
        let gamma = match modulus.degree() {
            Some(d) if (1..=MAX_GAMMA).contains(&d) => d,
            Some(d) => return Err(Gf2Error::UnsupportedDegree(d as i64)),
            None => return Err(Gf2Error::UnsupportedDegree(-1)),
        };
        if !is_irreducible(modulus) {
            return Err(Gf2Error::Reducible(modulus));
        }
        Ok(FieldCtx { gamma, modulus })
    }

    /// Context over the canonical modulus returned by [`find_irreducible`].
    pub fn canonical(gamma: u32) -> Result<Self, Gf2Error> {
        if !(1..=MAX_GAMMA).contains(&gamma) {
            return Err(Gf2Error::UnsupportedDegree(gamma as i64));
        }
        Ok(FieldCtx {
            gamma,
            modulus: find_irreducible(gamma),
        })
    }

    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn modulus(&self) -> BinPoly {
        self.modulus
    }

    /// Reduces an arbitrary polynomial into the field.
    pub fn reduce(&self, a: BinPoly) -> BinPoly {
        a.rem(self.modulus)
    }

    pub fn mul(&self, a: BinPoly, b: BinPoly) -> BinPoly {
        mul_mod(a, b, self)
    }

    pub fn pow(&self, a: BinPoly, e: u64) -> BinPoly {
        pow_mod(a, e, self)
    }

    /// Multiplicative inverse via a^(2^γ − 2); `None` for zero.
    pub fn inv(&self, a: BinPoly) -> Option<BinPoly> {
        let a = self.reduce(a);
        if a.is_zero() {
            return None;
        }
        // 2^γ − 2 overflows u64 only for γ = 64; split the exponent there.
        if self.gamma == 64 {
            let half = self.pow(a, (1u64 << 63) - 1);
            Some(self.mul(self.mul(half, half), a))
        } else {
            Some(self.pow(a, (1u64 << self.gamma) - 2))
        }
    }
}

/// `(a · b) mod b(x)`. Operands must already be reduced (degree < γ).
pub fn mul_mod(a: BinPoly, b: BinPoly, ctx: &FieldCtx) -> BinPoly {
    debug_assert!(a.degree().is_none_or(|d| d < ctx.gamma));
    debug_assert!(b.degree().is_none_or(|d| d < ctx.gamma));
    a.checked_mul(b)
        .expect("reduced operands cannot overflow")
        .rem(ctx.modulus)
}

/// `a^e mod b(x)` by square-and-multiply; `a^0 = 1`.
pub fn pow_mod(a: BinPoly, mut e: u64, ctx: &FieldCtx) -> BinPoly {
    let mut base = ctx.reduce(a);
    let mut acc = ctx.reduce(BinPoly::ONE);
    while e != 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, base, ctx);
        }
        base = mul_mod(base, base, ctx);
        e >>= 1;
    }
    acc
}

/// `x^(2^k) mod m` by k successive squarings.
fn frobenius_power(k: u32, m: BinPoly) -> BinPoly {
    let mut t = BinPoly::X.rem(m);
    for _ in 0..k {
        t = t.checked_mul(t).expect("reduced square fits").rem(m);
    }
    t
}

fn prime_factors(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            out.push(p);
            while n.is_multiple_of(p) {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's irreducibility test.
///
/// `b` of degree γ is irreducible iff `x^(2^γ) ≡ x (mod b)` and
/// `gcd(x^(2^(γ/q)) − x, b) = 1` for every prime `q | γ`.
/// Polynomials of degree 0 or the zero polynomial are not irreducible;
/// degrees above 64 are rejected (returns false).
pub fn is_irreducible(b: BinPoly) -> bool {
    let gamma = match b.degree() {
        Some(d) if (1..=MAX_GAMMA).contains(&d) => d,
        _ => return false,
    };
    let x = BinPoly::X.rem(b);
    if frobenius_power(gamma, b) != x {
        return false;
    }
    prime_factors(gamma).into_iter().all(|q| {
        let h = frobenius_power(gamma / q, b) ^ x;
        h.gcd(b).degree() == Some(0)
    })
}

/// The irreducible polynomial of degree `gamma` with the smallest coefficient
/// integer. Panics if `gamma` is 0 or above [`MAX_GAMMA`].
pub fn find_irreducible(gamma: u32) -> BinPoly {
    assert!((1..=MAX_GAMMA).contains(&gamma), "unsupported degree {gamma}");
    let lead = 1u128 << gamma;
    if gamma == 1 {
        return BinPoly(lead); // x itself
    }
    // for γ ≥ 2 the constant term must be 1
    (0..lead)
        .step_by(2)
        .map(|low| BinPoly(lead | low | 1))
        .find(|&p| is_irreducible(p))
        .expect("an irreducible polynomial exists for every degree")
}
