//! Anonymous veto: the logical OR of all inputs.

use super::{EngineError, Session};
use crate::keyfabric::PartyId;
use crate::transport::{Transport, TransportError};

/// Per-round record of a veto run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VetoTrace {
    pub output: bool,
    /// `(my coin, overall parity)` for every executed round.
    pub rounds: Vec<(bool, bool)>,
}

impl VetoTrace {
    /// True if some round's parity differs from this party's own coin, i.e.
    /// somebody else contributed a 1.
    pub fn saw_other_input(&self) -> bool {
        self.rounds.iter().any(|(c, p)| c ^ p)
    }
}

/// The `k`-th public announcement order: the rotation ending with party `k`.
pub(crate) fn rotation(n: usize, k: usize) -> Vec<PartyId> {
    (1..=n).map(|i| PartyId(((k + i) % n) as u8)).collect()
}

impl<T: Transport> Session<T> {
    /// Runs `n` orderings (each party speaks last in exactly one) of `β`
    /// parity rounds each. A vetoing party feeds a fresh uniform coin into
    /// every round, everyone else feeds 0. With `early_stop`, the run ends at
    /// the first round with parity 1.
    ///
    /// A missing announcement is returned as a transport error; callers
    /// decide how to treat it.
    pub async fn veto_rounds(&mut self, x: bool, early_stop: bool) -> Result<VetoTrace, EngineError> {
        let n = self.params.n;
        let mut trace = VetoTrace::default();
        for k in 0..n {
            let schedule = rotation(n, k);
            for _ in 0..self.params.beta {
                let c = x && self.coin();
                let r = self.parity_round_scheduled(c, &schedule).await?;
                trace.rounds.push((c, r.parity));
                if r.parity {
                    trace.output = true;
                    if early_stop {
                        return Ok(trace);
                    }
                }
            }
        }
        Ok(trace)
    }

    /// Anonymous veto. Returns 1 if any round's parity is 1 or any party
    /// refuses to announce; stops at the first 1.
    pub async fn run_veto(&mut self, x: bool) -> Result<bool, EngineError> {
        match self.veto_rounds(x, true).await {
            Ok(t) => Ok(t.output),
            Err(EngineError::Transport(TransportError::Timeout(_))) => Ok(true),
            Err(e) => Err(e),
        }
    }
}
