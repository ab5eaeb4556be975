//! Salted hash commitments to announced bits.

use sha2::{Digest, Sha256};

use super::RoundId;
use crate::keyfabric::PartyId;

pub const DIGEST_LEN: usize = 32;
pub const SALT_LEN: usize = 16;

const DOMAIN: &[u8] = b"qanon/commit/v1";

pub type CommitDigest = [u8; DIGEST_LEN];
pub type Salt = [u8; SALT_LEN];

/// `SHA-256(domain ‖ session ‖ seq ‖ party ‖ bit ‖ salt)`, integers big-endian.
pub fn commitment(round: RoundId, party: PartyId, bit: bool, salt: &Salt) -> CommitDigest {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(round.session.to_be_bytes());
    h.update(round.seq.to_be_bytes());
    h.update([party.0, bit as u8]);
    h.update(salt);
    h.finalize().into()
}

pub fn verify(digest: &CommitDigest, round: RoundId, party: PartyId, bit: bool, salt: &Salt) -> bool {
    commitment(round, party, bit, salt) == *digest
}
