//! Frame codec for the TCP transport.
//!
//! Every frame is
//!
//! ```text
//! | u32 len | u8 type | u64 session | u64 round | u8 party | payload |
//! ```
//!
//! in network byte order, where `len` counts the bytes after the length
//! field (`18 + payload`). Payloads:
//!
//! | type | code | payload                              |
//! |------|------|--------------------------------------|
//! | HELLO    | 1 | empty                            |
//! | COMMIT   | 2 | 32-byte SHA-256 digest           |
//! | REVEAL   | 3 | `u8` bit (0/1) then 16-byte salt |
//! | ANNOUNCE | 4 | `u8` bit (0/1)                   |
//! | ABORT    | 5 | `u8` reason code                 |

use std::fmt;
use std::io::{self, Read, Write};

use super::commit::{CommitDigest, Salt, DIGEST_LEN, SALT_LEN};
use crate::keyfabric::PartyId;

const FIXED_LEN: usize = 1 + 8 + 8 + 1;
const MAX_PAYLOAD: usize = DIGEST_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AbortReason {
    CommitmentMismatch = 1,
    Timeout = 2,
    KeysDepleted = 3,
    Protocol = 4,
}

impl AbortReason {
    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => AbortReason::CommitmentMismatch,
            2 => AbortReason::Timeout,
            3 => AbortReason::KeysDepleted,
            4 => AbortReason::Protocol,
            _ => return None,
        })
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AbortReason::CommitmentMismatch => "commitment mismatch",
            AbortReason::Timeout => "timeout",
            AbortReason::KeysDepleted => "keys depleted",
            AbortReason::Protocol => "protocol error",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Hello,
    Commit(CommitDigest),
    Reveal { bit: bool, salt: Salt },
    Announce(bool),
    Abort(AbortReason),
}

impl Body {
    pub fn code(&self) -> u8 {
        match self {
            Body::Hello => 1,
            Body::Commit(_) => 2,
            Body::Reveal { .. } => 3,
            Body::Announce(_) => 4,
            Body::Abort(_) => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session: u64,
    pub round: u64,
    pub party: PartyId,
    pub body: Body,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn read_bit(b: u8) -> io::Result<bool> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(invalid(format!("bit byte {b}"))),
    }
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::with_capacity(MAX_PAYLOAD);
        match &self.body {
            Body::Hello => {}
            Body::Commit(d) => payload.extend_from_slice(d),
            Body::Reveal { bit, salt } => {
                payload.push(*bit as u8);
                payload.extend_from_slice(salt);
            }
            Body::Announce(bit) => payload.push(*bit as u8),
            Body::Abort(r) => payload.push(*r as u8),
        }
        let mut out = Vec::with_capacity(4 + FIXED_LEN + payload.len());
        out.extend_from_slice(&((FIXED_LEN + payload.len()) as u32).to_be_bytes());
        out.push(self.body.code());
        out.extend_from_slice(&self.session.to_be_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out.push(self.party.0);
        out.extend_from_slice(&payload);
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Frame> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_be_bytes(len) as usize;
        if !(FIXED_LEN..=FIXED_LEN + MAX_PAYLOAD).contains(&len) {
            return Err(invalid(format!("frame length {len}")));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        Frame::decode_body(&buf)
    }

    /// Decodes a frame from its bytes after the length prefix.
    pub fn decode_body(buf: &[u8]) -> io::Result<Frame> {
        if buf.len() < FIXED_LEN {
            return Err(invalid("short frame"));
        }
        let code = buf[0];
        let session = u64::from_be_bytes(buf[1..9].try_into().unwrap());
        let round = u64::from_be_bytes(buf[9..17].try_into().unwrap());
        let party = PartyId(buf[17]);
        let payload = &buf[FIXED_LEN..];
        let want = |n: usize| {
            if payload.len() == n {
                Ok(())
            } else {
                Err(invalid(format!("type {code} payload of {} bytes", payload.len())))
            }
        };
        let body = match code {
            1 => {
                want(0)?;
                Body::Hello
            }
            2 => {
                want(DIGEST_LEN)?;
                Body::Commit(payload.try_into().unwrap())
            }
            3 => {
                want(1 + SALT_LEN)?;
                Body::Reveal {
                    bit: read_bit(payload[0])?,
                    salt: payload[1..].try_into().unwrap(),
                }
            }
            4 => {
                want(1)?;
                Body::Announce(read_bit(payload[0])?)
            }
            5 => {
                want(1)?;
                Body::Abort(
                    AbortReason::from_code(payload[0])
                        .ok_or_else(|| invalid(format!("abort reason {}", payload[0])))?,
                )
            }
            c => return Err(invalid(format!("unknown frame type {c}"))),
        };
        Ok(Frame {
            session,
            round,
            party,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn announce_layout_is_exact() {
        let f = Frame {
            session: 0x0102,
            round: 7,
            party: PartyId(3),
            body: Body::Announce(true),
        };
        assert_eq!(
            f.encode(),
            vec![
                0, 0, 0, 19, // len
                4, // type
                0, 0, 0, 0, 0, 0, 1, 2, // session
                0, 0, 0, 0, 0, 0, 0, 7, // round
                3, // party
                1, // bit
            ]
        );
    }

    #[test]
    fn rejects_malformed() {
        let good = Frame {
            session: 1,
            round: 2,
            party: PartyId(0),
            body: Body::Reveal { bit: false, salt: [9; SALT_LEN] },
        }
        .encode();
        assert!(Frame::read_from(&mut &good[..]).is_ok());
        let mut bad_type = good.clone();
        bad_type[4] = 9;
        assert!(Frame::read_from(&mut &bad_type[..]).is_err());
        let mut bad_bit = good.clone();
        bad_bit[22] = 2;
        assert!(Frame::read_from(&mut &bad_bit[..]).is_err());
        let mut bad_len = good.clone();
        bad_len[3] = 200;
        assert!(Frame::read_from(&mut &bad_len[..]).is_err());
        assert!(Frame::read_from(&mut &good[..10]).is_err());
    }

    fn body() -> impl Strategy<Value = Body> {
        prop_oneof![
            Just(Body::Hello),
            any::<[u8; 32]>().prop_map(Body::Commit),
            (any::<bool>(), any::<[u8; 16]>()).prop_map(|(bit, salt)| Body::Reveal { bit, salt }),
            any::<bool>().prop_map(Body::Announce),
            prop_oneof![
                Just(AbortReason::CommitmentMismatch),
                Just(AbortReason::Timeout),
                Just(AbortReason::KeysDepleted),
                Just(AbortReason::Protocol)
            ]
            .prop_map(Body::Abort),
        ]
    }

    proptest! {
        #[test]
        fn codec_round_trip(session: u64, round: u64, party: u8, body in body()) {
            let f = Frame { session, round, party: PartyId(party), body };
            let bytes = f.encode();
            prop_assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
            prop_assert_eq!(Frame::read_from(&mut &bytes[..]).unwrap(), f);
        }
    }
}
