//! Per-party protocol engine.
//!
//! A [`Session`] is one party's state machine. It draws pad bits from its
//! side of the key fabric, announces through its transport and keeps a
//! transcript of every announcement it observed. All parties of a session
//! run the same sequence of parity rounds, which keeps key cursors and round
//! numbers in lockstep without any handshake.

mod collision;
mod message;
mod notify;
mod veto;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::amd::AmdError;
use crate::keyfabric::{KeyError, KeyFabric, PartyId};
use crate::transport::{RoundId, Transport, TransportError};

pub use collision::CollisionVerdict;
pub use message::{FixedRole, MessageOutcome, Role};
pub use veto::VetoTrace;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Keys(#[from] KeyError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Amd(#[from] AmdError),
    #[error("invalid session parameters: {0}")]
    InvalidParams(String),
    #[error("repetition count {0} must be odd and at least 1")]
    EvenRepetition(u32),
    #[error("invalid protocol input: {0}")]
    InvalidInput(String),
}

/// Public parameters every party of a session agrees on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionParams {
    pub session_id: u64,
    pub n: usize,
    pub beta: u32,
    /// Each parity round is executed this many times and majority-voted.
    pub repetition: u32,
}

impl SessionParams {
    pub fn new(session_id: u64, n: usize, beta: u32) -> Self {
        SessionParams {
            session_id,
            n,
            beta,
            repetition: 1,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(3..=255).contains(&self.n) {
            return Err(EngineError::InvalidParams(format!("n = {} outside 3..=255", self.n)));
        }
        if self.beta == 0 {
            return Err(EngineError::InvalidParams("beta must be positive".into()));
        }
        if self.repetition.is_multiple_of(2) {
            return Err(EngineError::EvenRepetition(self.repetition));
        }
        Ok(())
    }
}

/// Source of a party's private random bits (veto coins, receiver pads, θ).
pub trait CoinSource {
    fn bit(&mut self) -> bool;
}

/// Per-party ChaCha stream derived from a session seed.
pub struct SeededCoins(ChaCha20Rng);

impl SeededCoins {
    pub fn new(seed: u64, party: PartyId) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(party.0 as u64 + 1);
        SeededCoins(rng)
    }
}

impl CoinSource for SeededCoins {
    fn bit(&mut self) -> bool {
        self.0.gen()
    }
}

/// Replays a fixed bit script, then yields zeros.
#[derive(Clone, Debug, Default)]
pub struct ScriptedCoins {
    script: Vec<bool>,
    pos: usize,
}

impl ScriptedCoins {
    pub fn new(script: Vec<bool>) -> Self {
        ScriptedCoins { script, pos: 0 }
    }

    /// Number of coins requested so far.
    pub fn drawn(&self) -> usize {
        self.pos
    }
}

impl CoinSource for ScriptedCoins {
    fn bit(&mut self) -> bool {
        let b = self.script.get(self.pos).copied().unwrap_or(false);
        self.pos += 1;
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub round: u64,
    pub party: PartyId,
    pub bit: bool,
}

/// Everything a party observed on the broadcast channel, plus its outcome.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub outcome: Option<String>,
}

impl Transcript {
    /// One `round_id party bit` line per announcement, then
    /// `# outcome <text>` if an outcome was recorded.
    pub fn to_log(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 8);
        for e in &self.entries {
            out.push_str(&format!("{} {} {}\n", e.round, e.party.0, e.bit as u8));
        }
        if let Some(o) = &self.outcome {
            out.push_str(&format!("# outcome {o}\n"));
        }
        out
    }

    /// Parses [`Transcript::to_log`] output.
    pub fn from_log(text: &str) -> Option<Transcript> {
        let mut t = Transcript::default();
        for line in text.lines() {
            if let Some(o) = line.strip_prefix("# outcome ") {
                t.outcome = Some(o.to_string());
                continue;
            }
            let mut it = line.split_whitespace();
            let round = it.next()?.parse().ok()?;
            let party = PartyId(it.next()?.parse().ok()?);
            let bit = match it.next()? {
                "0" => false,
                "1" => true,
                _ => return None,
            };
            t.entries.push(TranscriptEntry { round, party, bit });
        }
        Some(t)
    }
}

/// Result of one (possibly repeated) parity round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityRound {
    /// This party's announcement in each repetition; empty when excluded.
    pub announcements: Vec<bool>,
    /// Majority over repetitions of the overall parity.
    pub parity: bool,
}

/// One party's protocol state.
pub struct Session<T> {
    params: SessionParams,
    me: PartyId,
    keys: Arc<KeyFabric>,
    transport: T,
    coins: Box<dyn CoinSource>,
    next_seq: u64,
    ledger: Vec<u64>,
    transcript: Transcript,
}

impl<T: Transport> Session<T> {
    pub fn new(params: SessionParams, keys: Arc<KeyFabric>, transport: T, coins: Box<dyn CoinSource>) -> Result<Self, EngineError> {
        params.validate()?;
        if keys.n() != params.n || transport.n() != params.n {
            return Err(EngineError::InvalidParams(format!(
                "session has {} parties, fabric {}, transport {}",
                params.n,
                keys.n(),
                transport.n()
            )));
        }
        Ok(Session {
            me: transport.me(),
            params,
            keys,
            transport,
            coins,
            next_seq: 0,
            ledger: vec![0; params.n],
            transcript: Transcript::default(),
        })
    }

    pub fn me(&self) -> PartyId {
        self.me
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Sequence number the next round will use.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Key bits drawn from each peer's store (own slot is always 0).
    pub fn ledger(&self) -> &[u64] {
        &self.ledger
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn record_outcome(&mut self, outcome: impl fmt::Display) {
        self.transcript.outcome = Some(outcome.to_string());
    }

    /// Subsequent parity rounds run `n` times with identical inputs and
    /// take the majority parity.
    pub fn set_repetition(&mut self, n: u32) -> Result<(), EngineError> {
        if n.is_multiple_of(2) {
            return Err(EngineError::EvenRepetition(n));
        }
        self.params.repetition = n;
        Ok(())
    }

    fn coin(&mut self) -> bool {
        self.coins.bit()
    }

    fn all_parties(&self) -> impl Iterator<Item = PartyId> + Clone {
        PartyId::all(self.params.n)
    }

    /// One execution of the parity protocol with no repetition: returns this
    /// party's announcement (if it is in `schedule`) and the overall parity.
    async fn single_round(&mut self, input: bool, schedule: &[PartyId]) -> Result<(Option<bool>, bool), EngineError> {
        let me = self.me;
        let mut pad = false;
        for peer in self.all_parties().filter(|p| *p != me) {
            pad ^= self.keys.draw_bit(me, peer)?;
            self.ledger[peer.index()] += 1;
        }
        let announcing = schedule.contains(&me);
        let mine = announcing.then_some(pad ^ input);
        let round = RoundId {
            session: self.params.session_id,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        let ann = self.transport.round_exchange(round, mine, schedule).await?;
        self.transcript.entries.extend(ann.0.iter().map(|&(party, bit)| TranscriptEntry {
            round: round.seq,
            party,
            bit,
        }));
        // a silent listener strips its own pads off privately
        let parity = ann.parity() ^ (!announcing && pad);
        Ok((mine, parity))
    }

    /// Parity round with an explicit announcement order. Parties missing
    /// from `schedule` draw keys and listen without announcing.
    pub async fn parity_round_scheduled(&mut self, input: bool, schedule: &[PartyId]) -> Result<ParityRound, EngineError> {
        let reps = self.params.repetition;
        let mut announcements = Vec::new();
        let mut ones = 0;
        for _ in 0..reps {
            let (mine, parity) = self.single_round(input, schedule).await?;
            announcements.extend(mine);
            ones += parity as u32;
        }
        Ok(ParityRound {
            announcements,
            parity: 2 * ones > reps,
        })
    }

    /// Anonymous broadcast of one bit. Each party pads its input with one
    /// fresh key bit per peer; the XOR of all announcements equals the XOR
    /// of all inputs. An `excluded` party stays silent and recovers the
    /// parity privately from its own pads.
    pub async fn parity_round(&mut self, input: bool, excluded: Option<PartyId>) -> Result<ParityRound, EngineError> {
        let schedule: Vec<PartyId> = self.all_parties().filter(|p| Some(*p) != excluded).collect();
        self.parity_round_scheduled(input, &schedule).await
    }
}
