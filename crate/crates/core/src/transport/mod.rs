//! Round-synchronized broadcast among the parties of a session.
//!
//! Every parity round is one call to [`Transport::round_exchange`]: each
//! announcing party contributes one bit and every party (announcing or not)
//! receives the full vector of announcements in schedule order. Two
//! implementations exist: a deterministic in-process [`sim`] network with
//! adversary hooks and a full-mesh [`tcp`] transport.

pub mod commit;
pub mod sim;
pub mod tcp;
pub mod wire;

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::str::FromStr;

use thiserror::Error;

use crate::keyfabric::PartyId;

/// Identifies one announcement set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct RoundId {
    pub session: u64,
    pub seq: u64,
}

/// Announced bits of one round, in schedule order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Announcements(pub Vec<(PartyId, bool)>);

impl Announcements {
    /// XOR of all announced bits.
    pub fn parity(&self) -> bool {
        self.0.iter().fold(false, |acc, (_, b)| acc ^ b)
    }

    pub fn bit_of(&self, party: PartyId) -> Option<bool> {
        self.0.iter().find(|(p, _)| *p == party).map(|(_, b)| *b)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    /// The party did not announce in time ("refuses to broadcast").
    #[error("{0} did not announce in time")]
    Timeout(PartyId),
    #[error("{0} revealed a bit that does not match its commitment")]
    CommitmentMismatch(PartyId),
    #[error("{party} aborted the session ({reason})")]
    Aborted { party: PartyId, reason: wire::AbortReason },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("simulation stalled: some party waits on a round nobody else joins")]
    Stalled,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A party's blocking view of the broadcast channel.
#[allow(async_fn_in_trait)]
pub trait Transport {
    fn me(&self) -> PartyId;

    fn n(&self) -> usize;

    /// Announces `my_bit` (or nothing, when `me` is absent from `schedule`)
    /// and returns everyone's announcements in schedule order once the
    /// round is complete.
    async fn round_exchange(
        &mut self,
        round: RoundId,
        my_bit: Option<bool>,
        schedule: &[PartyId],
    ) -> Result<Announcements, TransportError>;
}

/// Which announcements a [`AdversaryPolicy::BitFlip`] party corrupts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundPredicate {
    All,
    /// Half-open sequence range.
    Range { start: u64, end: u64 },
    Only(BTreeSet<u64>),
}

impl RoundPredicate {
    pub fn matches(&self, seq: u64) -> bool {
        match self {
            RoundPredicate::All => true,
            RoundPredicate::Range { start, end } => (*start..*end).contains(&seq),
            RoundPredicate::Only(set) => set.contains(&seq),
        }
    }
}

/// Misbehaviour injected for one named party. Only that party's
/// announcements or timing are affected.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum AdversaryPolicy {
    #[default]
    Honest,
    /// Waits for every earlier announcement of the round before choosing its
    /// own bit. The default strategy forces the round parity to 0 whenever
    /// it speaks last.
    Rushing(PartyId),
    /// Never announces.
    Silent(PartyId),
    /// Flips its announced bit (after any commitment) on matching rounds.
    BitFlip { party: PartyId, rounds: RoundPredicate },
}

impl AdversaryPolicy {
    pub fn party(&self) -> Option<PartyId> {
        match self {
            AdversaryPolicy::Honest => None,
            AdversaryPolicy::Rushing(p) | AdversaryPolicy::Silent(p) => Some(*p),
            AdversaryPolicy::BitFlip { party, .. } => Some(*party),
        }
    }

    pub fn is_silent(&self, p: PartyId) -> bool {
        *self == AdversaryPolicy::Silent(p)
    }

    pub fn flips(&self, p: PartyId, seq: u64) -> bool {
        matches!(self, AdversaryPolicy::BitFlip { party, rounds } if *party == p && rounds.matches(seq))
    }
}

impl fmt::Display for AdversaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryPolicy::Honest => f.write_str("honest"),
            AdversaryPolicy::Rushing(p) => write!(f, "rushing:{}", p.0),
            AdversaryPolicy::Silent(p) => write!(f, "silent:{}", p.0),
            AdversaryPolicy::BitFlip { party, rounds } => {
                write!(f, "bitflip:{}", party.0)?;
                match rounds {
                    RoundPredicate::All => Ok(()),
                    RoundPredicate::Range { start, end } => write!(f, "@{start}..{end}"),
                    RoundPredicate::Only(set) => {
                        let list: Vec<String> = set.iter().map(u64::to_string).collect();
                        write!(f, "@{}", list.join(","))
                    }
                }
            }
        }
    }
}

impl FromStr for AdversaryPolicy {
    type Err = String;

    /// `honest`, `rushing:P`, `silent:P`, `bitflip:P`, `bitflip:P@A..B`
    /// or `bitflip:P@r1,r2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("invalid adversary policy {s:?}");
        if s == "honest" {
            return Ok(AdversaryPolicy::Honest);
        }
        let (mode, rest) = s.split_once(':').ok_or_else(bad)?;
        let (party, rounds) = match rest.split_once('@') {
            Some((p, r)) => (p, Some(r)),
            None => (rest, None),
        };
        let party = PartyId(party.parse().map_err(|_| bad())?);
        match (mode, rounds) {
            ("rushing", None) => Ok(AdversaryPolicy::Rushing(party)),
            ("silent", None) => Ok(AdversaryPolicy::Silent(party)),
            ("bitflip", None) => Ok(AdversaryPolicy::BitFlip {
                party,
                rounds: RoundPredicate::All,
            }),
            ("bitflip", Some(r)) => {
                let rounds = if let Some((a, b)) = r.split_once("..") {
                    RoundPredicate::Range {
                        start: a.parse().map_err(|_| bad())?,
                        end: b.parse().map_err(|_| bad())?,
                    }
                } else {
                    RoundPredicate::Only(
                        r.split(',')
                            .map(|x| x.trim().parse().map_err(|_| bad()))
                            .collect::<Result<_, _>>()?,
                    )
                };
                Ok(AdversaryPolicy::BitFlip { party, rounds })
            }
            _ => Err(bad()),
        }
    }
}
