//! Information-theoretically anonymous multi-party protocols over pairwise
//! one-time-pad keys: parity broadcast, veto, notification, collision
//! detection and private message transmission with an AMD code.
//!
//! The crate is organised bottom-up:
//!
//! - [`keyfabric`]: consume-once pairwise key stores (the QKD stand-in);
//! - [`gf2`] and [`amd`]: GF(2^γ) arithmetic and the tamper-detecting code;
//! - [`transport`]: simulated and TCP round-synchronised broadcast;
//! - [`engine`]: per-party protocol state machines;
//! - [`runner`] and [`descriptor`]: orchestration and session files;
//! - [`analysis`]: closed-form budgets and error rates, Monte Carlo checks.

pub mod amd;
pub mod analysis;
pub mod bits;
pub mod descriptor;
pub mod engine;
pub mod gf2;
pub mod keyfabric;
pub mod runner;
pub mod transport;

pub use amd::{AmdParams, Decoded, EncodedMessage};
pub use bits::Bits;
pub use engine::{CollisionVerdict, EngineError, MessageOutcome, Role, Session, SessionParams, Transcript};
pub use gf2::{BinPoly, FieldCtx};
pub use keyfabric::{KeyFabric, PartyId};
pub use runner::{PartyOutcome, Protocol, SimSetup, Task};
pub use transport::{AdversaryPolicy, RoundId, Transport, TransportError};
