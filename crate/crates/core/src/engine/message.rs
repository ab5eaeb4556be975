//! Anonymous private message transmission.

use std::fmt;

use super::{CollisionVerdict, EngineError, Session};
use crate::amd::{self, AmdParams, Decoded};
use crate::bits::{self, Bits};
use crate::keyfabric::PartyId;
use crate::transport::Transport;

/// A party's input to the full transmission protocol. The receiver does not
/// need to know its role in advance: it learns it from the notification step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Role {
    Sender { message: Bits, receiver: PartyId },
    Participant,
}

/// Role inside the fixed-role transmission, once sender and receiver are set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FixedRole {
    Sender(Bits),
    Receiver,
    Bystander,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageOutcome {
    NoSender,
    Collision,
    /// The closing veto stayed 0. Only the receiver holds the message.
    Delivered { message: Option<Bits> },
    /// The receiver detected tampering (or a party refused to announce in
    /// the closing veto).
    Corrupted,
}

impl fmt::Display for MessageOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageOutcome::NoSender => f.write_str("no-sender"),
            MessageOutcome::Collision => f.write_str("collision"),
            MessageOutcome::Delivered { message: Some(m) } => write!(f, "delivered {}", bits::to_hex(m)),
            MessageOutcome::Delivered { message: None } => f.write_str("delivered"),
            MessageOutcome::Corrupted => f.write_str("corrupted"),
        }
    }
}

/// What one party obtained from the fixed-role phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedRoleOutput {
    /// Overall parity of each of the `m'` rounds, as seen by everyone.
    pub broadcast: Bits,
    /// The receiver's decoding; `None` for the other roles.
    pub decoded: Option<Decoded>,
}

impl<T: Transport> Session<T> {
    /// `m'` parity rounds: the sender inputs its AMD codeword, the receiver
    /// a fresh uniform pad `r`, everyone else 0. The receiver unblinds
    /// `d ⊕ r` and decodes.
    pub async fn transmit_fixed_role(&mut self, role: &FixedRole, params: &AmdParams) -> Result<FixedRoleOutput, EngineError> {
        let len = params.encoded_len();
        let inputs: Bits = match role {
            FixedRole::Sender(message) => {
                let theta: Bits = (0..params.gamma).map(|_| self.coin()).collect();
                amd::encode(message, params, &theta)?.to_bits()
            }
            FixedRole::Receiver => (0..len).map(|_| self.coin()).collect(),
            FixedRole::Bystander => Bits::repeat(false, len),
        };
        let mut broadcast = Bits::with_capacity(len);
        for bit in inputs.iter().by_vals() {
            broadcast.push(self.parity_round(bit, None).await?.parity);
        }
        let decoded = match role {
            FixedRole::Receiver => Some(amd::decode(&(broadcast.clone() ^ &inputs), params)?),
            _ => None,
        };
        Ok(FixedRoleOutput { broadcast, decoded })
    }

    /// Collision detection, then notification of the receiver, then the
    /// fixed-role transmission, then a veto in which the receiver reports
    /// tampering. The message length (hence `params`) is public.
    pub async fn run_message_transmission(&mut self, role: &Role, params: &AmdParams) -> Result<MessageOutcome, EngineError> {
        let n = self.params.n;
        if let Role::Sender { message, receiver } = role {
            if message.len() != params.m {
                return Err(EngineError::InvalidInput(format!(
                    "message has {} bits, session expects {}",
                    message.len(),
                    params.m
                )));
            }
            if receiver.index() >= n || *receiver == self.me {
                return Err(EngineError::InvalidInput(format!("bad receiver {receiver}")));
            }
        }

        let sending = matches!(role, Role::Sender { .. });
        match self.run_collision_detection(sending).await? {
            CollisionVerdict::NoSender => return Ok(MessageOutcome::NoSender),
            CollisionVerdict::MultipleSenders => return Ok(MessageOutcome::Collision),
            CollisionVerdict::SingleSender => {}
        }

        let mut targets = vec![false; n];
        if let Role::Sender { receiver, .. } = role {
            targets[receiver.index()] = true;
        }
        let notified = self.run_notification(&targets).await?;

        let fixed = match role {
            Role::Sender { message, .. } => FixedRole::Sender(message.clone()),
            Role::Participant if notified => FixedRole::Receiver,
            Role::Participant => FixedRole::Bystander,
        };
        let out = self.transmit_fixed_role(&fixed, params).await?;
        let tampered = matches!(out.decoded, Some(Decoded::TamperDetected));
        if self.run_veto(tampered).await? {
            return Ok(MessageOutcome::Corrupted);
        }
        Ok(MessageOutcome::Delivered {
            message: out.decoded.and_then(|d| d.message().cloned()),
        })
    }
}
