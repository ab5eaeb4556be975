//! Session descriptor files (TOML).
//!
//! ```toml
//! session_id = 1
//! n = 8
//! beta = 16
//! repetition = 1
//! protocol = "message"        # broadcast | veto | notify | collision | message
//! fabric = "fabric.bin"
//! transport = "sim"           # sim | tcp
//! seed = 42
//! adversary = "honest"        # honest | rushing:P | silent:P | bitflip:P[@A..B]
//! inputs = [0, 1, 0, 0, 0, 0, 0, 0]   # broadcast, veto, collision
//! notify = [[2, 5]]                   # notify: [sender, recipient] pairs
//! commit_reveal = true        # default: on for tcp, off for sim
//! endpoints = ["127.0.0.1:7000", "127.0.0.1:7001"]  # tcp, one per party
//! party = 3                   # tcp: run only this party; omit to run all
//! listen = "0.0.0.0:7003"     # tcp: bind address if not the endpoint
//! out_dir = "out"
//!
//! [message]
//! sender = 2
//! receiver = 5
//! bits = 1024                 # may be omitted with `file` or `hex`
//! file = "message.bin"        # or hex = "...", or neither for seeded random
//! modulus = "x^22+x+1"        # optional explicit AMD modulus
//! ```
//!
//! Relative paths are resolved against the descriptor's directory.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amd::{AmdError, AmdParams};
use crate::bits::{self, Bits};
use crate::engine::{Role, SessionParams};
use crate::gf2::BinPoly;
use crate::keyfabric::PartyId;
use crate::runner::{Protocol, Task};
use crate::transport::AdversaryPolicy;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("cannot parse descriptor: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid descriptor: {0}")]
    Invalid(String),
    #[error(transparent)]
    Amd(#[from] AmdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, DescriptorError> {
    Err(DescriptorError::Invalid(msg.into()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Sim,
    Tcp,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageSpec {
    pub sender: u8,
    pub receiver: u8,
    #[serde(default)]
    pub bits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<String>,
}

fn one() -> u32 {
    1
}

fn honest() -> String {
    "honest".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDescriptor {
    #[serde(default)]
    pub session_id: u64,
    pub n: usize,
    pub beta: u32,
    #[serde(default = "one")]
    pub repetition: u32,
    pub protocol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fabric: Option<PathBuf>,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "honest")]
    pub adversary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit_reveal: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notify: Vec<[u8; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub endpoints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<MessageSpec>,
}

impl SessionDescriptor {
    pub fn from_toml(text: &str) -> Result<Self, DescriptorError> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a descriptor and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, DescriptorError> {
        let mut d = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = d.fabric.as_mut() {
            resolve(f);
        }
        if let Some(f) = d.message.as_mut().and_then(|m| m.file.as_mut()) {
            resolve(f);
        }
        if let Some(f) = d.out_dir.as_mut() {
            resolve(f);
        }
        Ok(d)
    }

    /// Fills in a missing message length from the hex message (4 bits per
    /// digit) or the message file (8 bits per byte).
    pub fn resolve_message_len(&mut self) -> Result<(), DescriptorError> {
        if let Some(m) = self.message.as_mut() {
            if m.bits == 0 {
                match (&m.hex, &m.file) {
                    (Some(h), _) => m.bits = h.trim().len() * 4,
                    (None, Some(f)) => m.bits = fs::metadata(f)?.len() as usize * 8,
                    (None, None) => return invalid("message length not given"),
                }
            }
        }
        Ok(())
    }

    /// Commit-reveal is on by default over TCP and off in the simulator.
    pub fn commit_reveal(&self) -> bool {
        self.commit_reveal.unwrap_or(self.transport == TransportKind::Tcp)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor is always serialisable")
    }

    pub fn protocol(&self) -> Result<Protocol, DescriptorError> {
        self.protocol.parse().map_err(DescriptorError::Invalid)
    }

    pub fn params(&self) -> SessionParams {
        SessionParams {
            session_id: self.session_id,
            n: self.n,
            beta: self.beta,
            repetition: self.repetition,
        }
    }

    pub fn policy(&self) -> Result<AdversaryPolicy, DescriptorError> {
        let p: AdversaryPolicy = self.adversary.parse().map_err(DescriptorError::Invalid)?;
        if p.party().is_some_and(|q| q.index() >= self.n) {
            return invalid(format!("adversary {p} is not a party"));
        }
        Ok(p)
    }

    pub fn endpoints(&self) -> Result<Vec<SocketAddr>, DescriptorError> {
        if self.endpoints.len() != self.n {
            return invalid(format!("{} endpoints for {} parties", self.endpoints.len(), self.n));
        }
        self.endpoints
            .iter()
            .map(|e| e.parse().map_err(|_| DescriptorError::Invalid(format!("bad endpoint {e:?}"))))
            .collect()
    }

    /// Public AMD parameters of a message session.
    pub fn amd_params(&self) -> Result<Option<AmdParams>, DescriptorError> {
        let Some(m) = &self.message else {
            return Ok(None);
        };
        Ok(Some(match &m.modulus {
            Some(text) => {
                let b: BinPoly = text.parse().map_err(|e| DescriptorError::Invalid(format!("{e}")))?;
                AmdParams::with_modulus(m.bits, self.beta, b)?
            }
            None => AmdParams::derive(m.bits, self.beta)?,
        }))
    }

    /// The message the sender transmits: from `hex`, from the first `bits`
    /// bits of `file`, or pseudo-random from the session seed.
    pub fn message_bits(&self) -> Result<Option<Bits>, DescriptorError> {
        let Some(m) = &self.message else {
            return Ok(None);
        };
        let out = if let Some(h) = &m.hex {
            bits::from_hex(h, m.bits).ok_or_else(|| DescriptorError::Invalid("message hex does not match bit count".into()))?
        } else if let Some(f) = &m.file {
            let mut b = Bits::from_vec(fs::read(f)?);
            if b.len() < m.bits {
                return invalid(format!("{} holds {} bits, need {}", f.display(), b.len(), m.bits));
            }
            b.truncate(m.bits);
            b
        } else {
            let mut rng = ChaCha20Rng::seed_from_u64(self.seed.unwrap_or(0) ^ 0x6d65_7373_6167_6521);
            let mut bytes = vec![0u8; m.bits.div_ceil(8)];
            rng.fill_bytes(&mut bytes);
            let mut b = Bits::from_vec(bytes);
            b.truncate(m.bits);
            b
        };
        Ok(Some(out))
    }

    fn bit_inputs(&self) -> Result<Vec<bool>, DescriptorError> {
        if self.inputs.is_empty() {
            return Ok(vec![false; self.n]);
        }
        if self.inputs.len() != self.n {
            return invalid(format!("{} inputs for {} parties", self.inputs.len(), self.n));
        }
        self.inputs
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => invalid(format!("input {b} is not a bit")),
            })
            .collect()
    }

    /// One task per party, checking that roles are consistent.
    pub fn tasks(&self) -> Result<Vec<Task>, DescriptorError> {
        self.params().validate().map_err(|e| DescriptorError::Invalid(e.to_string()))?;
        let n = self.n;
        Ok(match self.protocol()? {
            Protocol::Broadcast => self.bit_inputs()?.into_iter().map(Task::Broadcast).collect(),
            Protocol::Veto => self.bit_inputs()?.into_iter().map(Task::Veto).collect(),
            Protocol::Collision => self.bit_inputs()?.into_iter().map(Task::Collision).collect(),
            Protocol::Notify => {
                let mut targets = vec![vec![false; n]; n];
                for &[s, r] in &self.notify {
                    let (s, r) = (s as usize, r as usize);
                    if s >= n || r >= n || s == r {
                        return invalid(format!("bad notification {s} -> {r}"));
                    }
                    targets[s][r] = true;
                }
                targets.into_iter().map(Task::Notify).collect()
            }
            Protocol::Message => {
                let spec = self.message.as_ref().ok_or_else(|| DescriptorError::Invalid("message protocol needs [message]".into()))?;
                let (s, r) = (spec.sender as usize, spec.receiver as usize);
                if s >= n || r >= n || s == r {
                    return invalid(format!("bad sender/receiver {s} -> {r}"));
                }
                let message = self.message_bits()?.expect("message section present");
                (0..n)
                    .map(|i| {
                        Task::Message(if i == s {
                            Role::Sender {
                                message: message.clone(),
                                receiver: PartyId(r as u8),
                            }
                        } else {
                            Role::Participant
                        })
                    })
                    .collect()
            }
        })
    }
}
