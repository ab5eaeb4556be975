//! Algebraic manipulation detection (AMD) code over GF(2^γ).
//!
//! A message `μ` of `m` bits is split into `d` chunks of `γ` bits (zero
//! padded) and mapped, together with a random `θ`, to the tag
//!
//! ```text
//! τ = θ^(d+2) + Σ_{i=1..d} μ[i-1] · θ^i      in GF(2^γ)
//! ```
//!
//! The codeword is `μ ‖ θ ‖ τ`, `m + 2γ` bits long. Any additive offset
//! chosen independently of `θ` goes unnoticed with probability at most
//! `(d+1)/2^γ ≤ 2^-β`.
//!
//! Bit strings map to field elements MSB-first: the first bit of a chunk is
//! the coefficient of `x^(γ-1)`.

use bitvec::prelude::*;
use thiserror::Error;

use crate::bits::Bits;
use crate::gf2::{BinPoly, FieldCtx, Gf2Error, MAX_GAMMA};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AmdError {
    #[error("invalid AMD parameters: {0}")]
    InvalidParams(String),
    #[error("{what} has {got} bits, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("modulus degree {got} does not match tag length {gamma}")]
    ModulusDegree { gamma: u32, got: u32 },
    #[error(transparent)]
    Field(#[from] Gf2Error),
}

/// Global code parameters, shared by sender and receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AmdParams {
    pub m: usize,
    pub beta: u32,
    /// Number of γ-bit message chunks; always odd.
    pub d: usize,
    /// Tag and randomness length in bits.
    pub gamma: u32,
    pub ctx: FieldCtx,
}

/// Smallest odd `d` with `d·(β + log2(d+1)) ≥ m`, and `γ = ⌈β + log2(d+1)⌉`.
pub fn chunk_layout(m: usize, beta: u32) -> (usize, u32) {
    let mut d = 1usize;
    loop {
        let per_chunk = beta as f64 + ((d + 1) as f64).log2();
        if d as f64 * per_chunk >= m as f64 {
            return (d, per_chunk.ceil() as u32);
        }
        d += 2;
    }
}

impl AmdParams {
    /// Derives `(d, γ)` and uses the canonical irreducible modulus of degree γ.
    pub fn derive(m: usize, beta: u32) -> Result<Self, AmdError> {
        let (d, gamma) = Self::layout(m, beta)?;
        Ok(AmdParams {
            m,
            beta,
            d,
            gamma,
            ctx: FieldCtx::canonical(gamma)?,
        })
    }

    /// Derives `(d, γ)` but uses the given modulus, which must be irreducible
    /// of degree γ.
    pub fn with_modulus(m: usize, beta: u32, modulus: BinPoly) -> Result<Self, AmdError> {
        let (d, gamma) = Self::layout(m, beta)?;
        let ctx = FieldCtx::new(modulus)?;
        if ctx.gamma() != gamma {
            return Err(AmdError::ModulusDegree {
                gamma,
                got: ctx.gamma(),
            });
        }
        Ok(AmdParams { m, beta, d, gamma, ctx })
    }

    fn layout(m: usize, beta: u32) -> Result<(usize, u32), AmdError> {
        if m == 0 || beta == 0 {
            return Err(AmdError::InvalidParams(format!("m = {m}, beta = {beta}")));
        }
        let (d, gamma) = chunk_layout(m, beta);
        if gamma > MAX_GAMMA {
            return Err(AmdError::InvalidParams(format!(
                "tag length {gamma} exceeds {MAX_GAMMA} bits"
            )));
        }
        Ok((d, gamma))
    }

    /// Codeword length `m + 2γ`.
    pub fn encoded_len(&self) -> usize {
        self.m + 2 * self.gamma as usize
    }

    /// `m / (m + 2γ)`.
    pub fn efficiency(&self) -> f64 {
        self.m as f64 / self.encoded_len() as f64
    }
}

fn check_len(what: &'static str, bits: &BitSlice<u8, Msb0>, expected: usize) -> Result<(), AmdError> {
    if bits.len() != expected {
        return Err(AmdError::LengthMismatch {
            what,
            expected,
            got: bits.len(),
        });
    }
    Ok(())
}

/// The tag function `F(μ, θ)`.
pub fn tag(mu: &BitSlice<u8, Msb0>, theta: &BitSlice<u8, Msb0>, params: &AmdParams) -> Result<Bits, AmdError> {
    check_len("message", mu, params.m)?;
    check_len("theta", theta, params.gamma as usize)?;
    let g = params.gamma as usize;
    let ctx = &params.ctx;
    let th = BinPoly::from_msb_bits(theta.iter().by_vals());

    // chunk i covers bits [iγ, (i+1)γ); bits past m are zero padding
    let chunk = |i: usize| {
        let lo = (i * g).min(params.m);
        let hi = ((i + 1) * g).min(params.m);
        let pad = g - (hi - lo);
        BinPoly::from_msb_bits(mu[lo..hi].iter().by_vals().chain(std::iter::repeat_n(false, pad)))
    };

    // Horner: Σ_{i=1..d} μ[i-1] θ^i = (…((μ[d-1])θ + μ[d-2])θ + … + μ[0])θ
    let mut acc = BinPoly::ZERO;
    for i in (0..params.d).rev() {
        acc = ctx.mul(acc ^ chunk(i), th);
    }
    let f = acc ^ ctx.pow(th, params.d as u64 + 2);
    Ok(f.to_msb_bits(params.gamma).into_iter().collect())
}

/// A codeword `(μ, θ, τ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedMessage {
    pub mu: Bits,
    pub theta: Bits,
    pub tau: Bits,
}

impl EncodedMessage {
    /// `μ ‖ θ ‖ τ`.
    pub fn to_bits(&self) -> Bits {
        let mut out = self.mu.clone();
        out.extend_from_bitslice(&self.theta);
        out.extend_from_bitslice(&self.tau);
        out
    }

    pub fn len(&self) -> usize {
        self.mu.len() + self.theta.len() + self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Encodes `message` with caller-supplied randomness `theta` (γ bits).
pub fn encode(message: &BitSlice<u8, Msb0>, params: &AmdParams, theta: &BitSlice<u8, Msb0>) -> Result<EncodedMessage, AmdError> {
    let tau = tag(message, theta, params)?;
    Ok(EncodedMessage {
        mu: message.to_bitvec(),
        theta: theta.to_bitvec(),
        tau,
    })
}

/// Result of decoding a received word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decoded {
    Valid(Bits),
    TamperDetected,
}

impl Decoded {
    pub fn message(&self) -> Option<&Bits> {
        match self {
            Decoded::Valid(m) => Some(m),
            Decoded::TamperDetected => None,
        }
    }
}

/// Recomputes the tag over the received `μ̃, θ̃` and compares it to `τ̃`.
pub fn decode(rho: &BitSlice<u8, Msb0>, params: &AmdParams) -> Result<Decoded, AmdError> {
    check_len("codeword", rho, params.encoded_len())?;
    let (m, g) = (params.m, params.gamma as usize);
    let (mu, rest) = rho.split_at(m);
    let (theta, tau) = rest.split_at(g);
    if tag(mu, theta, params)? == *tau {
        Ok(Decoded::Valid(mu.to_bitvec()))
    } else {
        Ok(Decoded::TamperDetected)
    }
}
