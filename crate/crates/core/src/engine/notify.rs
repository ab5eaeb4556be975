//! Anonymous notification.

use super::{EngineError, Session};
use crate::keyfabric::PartyId;
use crate::transport::Transport;

impl<T: Transport> Session<T> {
    /// `targets[i]` says whether this party wants to notify party `i`.
    ///
    /// For each recipient in ascending order, `β` parity rounds run with the
    /// recipient silent; a notifier feeds uniform coins, everyone else 0.
    /// The recipient privately ORs the parities it recovers. Returns whether
    /// this party was notified. The cost is the same whatever the inputs.
    pub async fn run_notification(&mut self, targets: &[bool]) -> Result<bool, EngineError> {
        let n = self.params.n;
        if targets.len() != n {
            return Err(EngineError::InvalidInput(format!(
                "notification targets have length {}, expected {n}",
                targets.len()
            )));
        }
        let me = self.me;
        let mut notified = false;
        for recipient in PartyId::all(n) {
            for _ in 0..self.params.beta {
                let c = recipient != me && targets[recipient.index()] && self.coin();
                let r = self.parity_round(c, Some(recipient)).await?;
                if recipient == me {
                    notified |= r.parity;
                }
            }
        }
        Ok(notified)
    }
}
