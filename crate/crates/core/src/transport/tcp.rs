//! Full-mesh TCP transport.
//!
//! Party `i` dials every party `j < i` and accepts a connection from every
//! `j > i`; the first frame on each connection is a HELLO naming the dialer.
//! A reader thread per peer feeds one inbox. Rounds are leader-free: a party
//! proceeds once the frames of all `n-1` peers for that round have arrived.
//! By default every round runs commit-then-reveal.

use std::collections::HashMap;
use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::commit::{self, CommitDigest, SALT_LEN};
use super::wire::{AbortReason, Body, Frame};
use super::{Announcements, RoundId, Transport, TransportError};
use crate::keyfabric::PartyId;

#[derive(Clone, Debug)]
pub struct TcpConfig {
    pub round_timeout: Duration,
    pub connect_timeout: Duration,
    /// Plain ANNOUNCE rounds when false. Only meant for testing.
    pub commit_reveal: bool,
    /// Seed for commitment salts; `None` draws from the OS.
    pub salt_seed: Option<u64>,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            round_timeout: Duration::from_secs(5),
            connect_timeout: Duration::from_secs(30),
            commit_reveal: true,
            salt_seed: None,
        }
    }
}

enum Inbound {
    Frame(PartyId, Frame),
    Closed(PartyId),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Kind {
    Commit,
    Reveal,
    Announce,
}

pub struct TcpTransport {
    me: PartyId,
    n: usize,
    session: u64,
    config: TcpConfig,
    peers: Vec<Option<TcpStream>>,
    inbox: Receiver<Inbound>,
    pending: HashMap<(u64, Kind, PartyId), Body>,
    aborted: Option<(PartyId, AbortReason)>,
    closed: Vec<bool>,
    salt_rng: ChaCha20Rng,
}

fn spawn_reader(peer: PartyId, stream: TcpStream, tx: Sender<Inbound>) -> io::Result<()> {
    thread::Builder::new()
        .name(format!("qanon-rx-{}", peer.0))
        .spawn(move || {
            let mut r = BufReader::new(stream);
            loop {
                match Frame::read_from(&mut r) {
                    // channels are authenticated; frames claiming another sender are dropped
                    Ok(f) if f.party == peer => {
                        if tx.send(Inbound::Frame(peer, f)).is_err() {
                            return;
                        }
                    }
                    Ok(_) => continue,
                    Err(_) => {
                        let _ = tx.send(Inbound::Closed(peer));
                        return;
                    }
                }
            }
        })?;
    Ok(())
}

impl TcpTransport {
    /// Connects the full mesh. `endpoints[j]` is where party `j` listens;
    /// `listener` must already be bound to `endpoints[me]`.
    pub fn establish(
        me: PartyId,
        session: u64,
        listener: TcpListener,
        endpoints: &[SocketAddr],
        config: TcpConfig,
    ) -> Result<Self, TransportError> {
        let n = endpoints.len();
        if me.index() >= n {
            return Err(TransportError::Protocol(format!("{me} has no endpoint")));
        }
        let deadline = Instant::now() + config.connect_timeout;
        let mut peers: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();

        for j in 0..me.index() {
            let stream = loop {
                match TcpStream::connect_timeout(&endpoints[j], Duration::from_millis(500)) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() >= deadline => return Err(e.into()),
                    Err(_) => thread::sleep(Duration::from_millis(20)),
                }
            };
            stream.set_nodelay(true)?;
            let mut s = &stream;
            Frame {
                session,
                round: 0,
                party: me,
                body: Body::Hello,
            }
            .write_to(&mut s)?;
            peers[j] = Some(stream);
        }

        listener.set_nonblocking(true)?;
        let mut waiting = n - me.index() - 1;
        while waiting > 0 {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(config.connect_timeout))?;
                    let hello = Frame::read_from(&mut &stream)?;
                    stream.set_read_timeout(None)?;
                    let j = hello.party.index();
                    if hello.body != Body::Hello || hello.session != session || j <= me.index() || j >= n || peers[j].is_some() {
                        return Err(TransportError::Protocol(format!("unexpected greeting {hello:?}")));
                    }
                    peers[j] = Some(stream);
                    waiting -= 1;
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Io(io::Error::new(
                            io::ErrorKind::TimedOut,
                            format!("{waiting} peers never connected"),
                        )));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }

        let (tx, inbox) = mpsc::channel();
        for (j, s) in peers.iter().enumerate() {
            if let Some(s) = s {
                spawn_reader(PartyId(j as u8), s.try_clone()?, tx.clone())?;
            }
        }
        let salt_rng = match config.salt_seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        Ok(TcpTransport {
            me,
            n,
            session,
            config,
            peers,
            inbox,
            pending: HashMap::new(),
            aborted: None,
            closed: vec![false; n],
            salt_rng,
        })
    }

    fn broadcast(&mut self, round: u64, body: Body) -> Result<(), TransportError> {
        let bytes = Frame {
            session: self.session,
            round,
            party: self.me,
            body,
        }
        .encode();
        for s in self.peers.iter_mut().flatten() {
            // a vanished peer shows up as a timeout on the receive side
            let _ = io::Write::write_all(s, &bytes);
        }
        Ok(())
    }

    /// Tells every peer the session is over.
    pub fn abort(&mut self, reason: AbortReason) {
        let _ = self.broadcast(u64::MAX, Body::Abort(reason));
    }

    fn stash(&mut self, frame: Frame, from: PartyId) {
        let kind = match frame.body {
            Body::Commit(_) => Kind::Commit,
            Body::Reveal { .. } => Kind::Reveal,
            Body::Announce(_) => Kind::Announce,
            Body::Abort(reason) => {
                self.aborted.get_or_insert((from, reason));
                return;
            }
            Body::Hello => return,
        };
        if frame.session == self.session {
            self.pending.entry((frame.round, kind, from)).or_insert(frame.body);
        }
    }

    /// Waits until `from` have all sent a `kind` frame for round `seq`.
    fn collect(&mut self, seq: u64, kind: Kind, from: &[PartyId]) -> Result<HashMap<PartyId, Body>, TransportError> {
        let deadline = Instant::now() + self.config.round_timeout;
        loop {
            if let Some((party, reason)) = self.aborted {
                return Err(TransportError::Aborted { party, reason });
            }
            let missing: Vec<PartyId> = from
                .iter()
                .copied()
                .filter(|p| !self.pending.contains_key(&(seq, kind, *p)))
                .collect();
            if missing.is_empty() {
                return Ok(from
                    .iter()
                    .map(|p| (*p, self.pending.remove(&(seq, kind, *p)).expect("present")))
                    .collect());
            }
            // a closed peer will never answer; same as refusing to broadcast
            if let Some(p) = missing.iter().find(|p| self.closed[p.index()]) {
                return Err(TransportError::Timeout(*p));
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(TransportError::Timeout(missing[0]));
            }
            match self.inbox.recv_timeout(deadline - now) {
                Ok(Inbound::Frame(p, f)) => self.stash(f, p),
                Ok(Inbound::Closed(p)) => self.closed[p.index()] = true,
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(TransportError::Timeout(missing[0]));
                }
            }
        }
    }

    fn others(&self, schedule: &[PartyId]) -> Vec<PartyId> {
        schedule.iter().copied().filter(|p| *p != self.me).collect()
    }

    /// Commit, then reveal. A reveal that fails to open its commitment
    /// aborts the session for everyone.
    pub fn commit_reveal_exchange(
        &mut self,
        round: RoundId,
        my_bit: Option<bool>,
        schedule: &[PartyId],
    ) -> Result<Announcements, TransportError> {
        let others = self.others(schedule);
        let mut salt = [0u8; SALT_LEN];
        self.salt_rng.fill_bytes(&mut salt);
        if let Some(bit) = my_bit {
            let digest = commit::commitment(round, self.me, bit, &salt);
            self.broadcast(round.seq, Body::Commit(digest))?;
        }
        let commits = self.collect(round.seq, Kind::Commit, &others)?;
        if let Some(bit) = my_bit {
            self.broadcast(round.seq, Body::Reveal { bit, salt })?;
        }
        let reveals = self.collect(round.seq, Kind::Reveal, &others)?;

        let mut out = Vec::with_capacity(schedule.len());
        for &p in schedule {
            if p == self.me {
                out.push((p, my_bit.expect("announcer has a bit")));
                continue;
            }
            let (Body::Commit(digest), Body::Reveal { bit, salt }) = (&commits[&p], &reveals[&p]) else {
                return Err(TransportError::Protocol("frame kind mix-up".into()));
            };
            let digest: &CommitDigest = digest;
            if !commit::verify(digest, round, p, *bit, salt) {
                self.abort(AbortReason::CommitmentMismatch);
                return Err(TransportError::CommitmentMismatch(p));
            }
            out.push((p, *bit));
        }
        Ok(Announcements(out))
    }

    fn plain_exchange(&mut self, round: RoundId, my_bit: Option<bool>, schedule: &[PartyId]) -> Result<Announcements, TransportError> {
        let others = self.others(schedule);
        if let Some(bit) = my_bit {
            self.broadcast(round.seq, Body::Announce(bit))?;
        }
        let got = self.collect(round.seq, Kind::Announce, &others)?;
        schedule
            .iter()
            .map(|&p| {
                if p == self.me {
                    return Ok((p, my_bit.expect("announcer has a bit")));
                }
                match got[&p] {
                    Body::Announce(b) => Ok((p, b)),
                    _ => Err(TransportError::Protocol("frame kind mix-up".into())),
                }
            })
            .collect::<Result<_, _>>()
            .map(Announcements)
    }
}

impl Transport for TcpTransport {
    fn me(&self) -> PartyId {
        self.me
    }

    fn n(&self) -> usize {
        self.n
    }

    async fn round_exchange(
        &mut self,
        round: RoundId,
        my_bit: Option<bool>,
        schedule: &[PartyId],
    ) -> Result<Announcements, TransportError> {
        if schedule.contains(&self.me) != my_bit.is_some() {
            return Err(TransportError::Protocol("announcer/bit mismatch".into()));
        }
        if round.session != self.session {
            return Err(TransportError::Protocol(format!("foreign session {}", round.session)));
        }
        if self.config.commit_reveal {
            self.commit_reveal_exchange(round, my_bit, schedule)
        } else {
            self.plain_exchange(round, my_bit, schedule)
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for s in self.peers.iter().flatten() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}
