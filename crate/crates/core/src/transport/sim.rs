//! Deterministic in-process broadcast network.
//!
//! All parties of a simulation share one hub and run as futures on a single
//! thread (see [`drive`]). A round completes once every announcing party has
//! posted, so results never depend on polling order. Adversary policies are
//! applied by the hub to the named party only.

use std::cell::RefCell;
use std::collections::HashMap;
use std::future::{poll_fn, Future};
use std::pin::pin;
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::task::{Context, Poll, Waker};

use futures::task::{waker, ArcWake};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::commit::{self, CommitDigest, Salt, SALT_LEN};
use super::{AdversaryPolicy, Announcements, RoundId, Transport, TransportError};
use crate::keyfabric::PartyId;

/// What a rushing party sees before committing its bit.
#[derive(Debug)]
pub struct RushView<'a> {
    pub round: RoundId,
    pub party: PartyId,
    /// The bit an honest party would announce.
    pub honest_bit: bool,
    /// Announcements of every party scheduled before this one.
    pub prior: &'a [(PartyId, bool)],
    /// Number of parties scheduled after this one.
    pub later: usize,
}

pub type RushHook = Box<dyn FnMut(&RushView<'_>) -> bool>;

/// Default rushing strategy: when speaking last, cancel the parity of
/// everything announced before, forcing the round to 0.
pub fn jam_to_zero(view: &RushView<'_>) -> bool {
    if view.later == 0 {
        view.prior.iter().fold(false, |acc, (_, b)| acc ^ b)
    } else {
        view.honest_bit
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Phase {
    Plain,
    Commit,
    Reveal,
}

#[derive(Clone, Copy, Debug)]
enum Post {
    Bit(bool),
    Commit(CommitDigest),
    Reveal(bool, Salt),
}

struct Slot {
    schedule: Vec<PartyId>,
    posts: Vec<Option<Post>>,
    reads: usize,
}

struct Hub {
    n: usize,
    policy: AdversaryPolicy,
    commit_reveal: bool,
    rush_hook: Option<RushHook>,
    slots: HashMap<(u64, Phase), Slot>,
    wakers: Vec<Waker>,
}

type Key = (u64, Phase);

impl Hub {
    fn join(&mut self, key: Key, schedule: &[PartyId]) -> Result<(), TransportError> {
        if let Some(p) = schedule.iter().find(|p| p.index() >= self.n) {
            return Err(TransportError::Protocol(format!("{p} is not in this session")));
        }
        let n = self.n;
        let slot = self.slots.entry(key).or_insert_with(|| Slot {
            schedule: schedule.to_vec(),
            posts: vec![None; n],
            reads: 0,
        });
        if slot.schedule != schedule {
            return Err(TransportError::Protocol(format!(
                "round {} joined with inconsistent schedules",
                key.0
            )));
        }
        Ok(())
    }

    fn post(&mut self, key: Key, me: PartyId, post: Post) {
        let slot = self.slots.get_mut(&key).expect("joined before posting");
        slot.posts[me.index()] = Some(post);
        self.wakers.drain(..).for_each(Waker::wake);
    }

    fn expected<'a>(&'a self, schedule: &'a [PartyId]) -> impl Iterator<Item = PartyId> + 'a {
        schedule.iter().copied().filter(|p| !self.policy.is_silent(*p))
    }

    fn posted(&self, key: Key, p: PartyId) -> bool {
        self.slots[&key].posts[p.index()].is_some()
    }

    fn complete(&self, key: Key) -> bool {
        let slot = &self.slots[&key];
        self.expected(&slot.schedule).all(|p| self.posted(key, p))
    }

    /// Everything announced before `me` in the schedule, once it is all in.
    fn prior_if_ready(&self, key: Key, me: PartyId) -> Option<(Vec<(PartyId, bool)>, usize)> {
        let slot = &self.slots[&key];
        let pos = slot.schedule.iter().position(|p| *p == me)?;
        let before = &slot.schedule[..pos];
        if !self.expected(before).all(|p| self.posted(key, p)) {
            return None;
        }
        let prior = before
            .iter()
            .filter_map(|p| match slot.posts[p.index()] {
                Some(Post::Bit(b)) => Some((*p, b)),
                _ => None,
            })
            .collect();
        Some((prior, slot.schedule.len() - pos - 1))
    }

    fn read(&mut self, key: Key) -> Result<Vec<(PartyId, Post)>, TransportError> {
        let n = self.n;
        let slot = self.slots.get_mut(&key).expect("joined before reading");
        slot.reads += 1;
        let result = slot
            .schedule
            .iter()
            .map(|p| slot.posts[p.index()].map(|post| (*p, post)).ok_or(TransportError::Timeout(*p)))
            .collect();
        if slot.reads == n {
            self.slots.remove(&key);
        }
        result
    }
}

/// Shared state of one simulated session.
#[derive(Clone)]
pub struct SimNetwork {
    hub: Rc<RefCell<Hub>>,
    session: u64,
}

impl SimNetwork {
    pub fn new(n: usize, session: u64, policy: AdversaryPolicy) -> Self {
        let rush_hook: Option<RushHook> = match policy {
            AdversaryPolicy::Rushing(_) => Some(Box::new(jam_to_zero)),
            _ => None,
        };
        SimNetwork {
            hub: Rc::new(RefCell::new(Hub {
                n,
                policy,
                commit_reveal: false,
                rush_hook,
                slots: HashMap::new(),
                wakers: Vec::new(),
            })),
            session,
        }
    }

    /// Runs every round as commit-then-reveal instead of a plain exchange.
    pub fn with_commit_reveal(self, on: bool) -> Self {
        self.hub.borrow_mut().commit_reveal = on;
        self
    }

    /// Replaces the strategy of the rushing party.
    pub fn set_rushing_hook(&self, hook: RushHook) {
        self.hub.borrow_mut().rush_hook = Some(hook);
    }

    pub fn n(&self) -> usize {
        self.hub.borrow().n
    }

    pub fn endpoint(&self, me: PartyId) -> SimTransport {
        SimTransport {
            me,
            hub: Rc::clone(&self.hub),
            salt_rng: ChaCha20Rng::seed_from_u64(self.session ^ ((me.0 as u64) << 56)),
        }
    }

    pub fn endpoints(&self) -> Vec<SimTransport> {
        PartyId::all(self.n()).map(|p| self.endpoint(p)).collect()
    }
}

/// One party's handle on a [`SimNetwork`].
pub struct SimTransport {
    me: PartyId,
    hub: Rc<RefCell<Hub>>,
    salt_rng: ChaCha20Rng,
}

impl SimTransport {
    async fn wait_until<F>(&self, mut ready: F)
    where
        F: FnMut(&Hub) -> bool,
    {
        poll_fn(|cx: &mut Context<'_>| {
            let mut hub = self.hub.borrow_mut();
            if ready(&hub) {
                Poll::Ready(())
            } else {
                hub.wakers.push(cx.waker().clone());
                Poll::Pending
            }
        })
        .await
    }

    async fn phase_exchange(
        &mut self,
        round: RoundId,
        phase: Phase,
        post: Option<Post>,
        schedule: &[PartyId],
    ) -> Result<Vec<(PartyId, Post)>, TransportError> {
        let key = (round.seq, phase);
        self.hub.borrow_mut().join(key, schedule)?;
        if let Some(post) = post {
            let silent = self.hub.borrow().policy.is_silent(self.me);
            if !silent {
                self.hub.borrow_mut().post(key, self.me, post);
            }
        }
        self.wait_until(|hub| hub.complete(key)).await;
        self.hub.borrow_mut().read(key)
    }

    /// Plain exchange, with the rushing and bit-flip policies applied.
    async fn plain_exchange(
        &mut self,
        round: RoundId,
        my_bit: Option<bool>,
        schedule: &[PartyId],
    ) -> Result<Announcements, TransportError> {
        let key = (round.seq, Phase::Plain);
        let me = self.me;
        let mut bit = my_bit;
        if let Some(honest_bit) = my_bit {
            let rushing = self.hub.borrow().policy == AdversaryPolicy::Rushing(me);
            if rushing {
                self.hub.borrow_mut().join(key, schedule)?;
                self.wait_until(|hub| hub.prior_if_ready(key, me).is_some()).await;
                let (prior, later) = self.hub.borrow().prior_if_ready(key, me).expect("ready");
                let mut hook = self.hub.borrow_mut().rush_hook.take();
                if let Some(h) = hook.as_mut() {
                    bit = Some(h(&RushView {
                        round,
                        party: me,
                        honest_bit,
                        prior: &prior,
                        later,
                    }));
                }
                self.hub.borrow_mut().rush_hook = hook;
            }
            if self.hub.borrow().policy.flips(me, round.seq) {
                bit = bit.map(|b| !b);
            }
        }
        let posts = self.phase_exchange(round, Phase::Plain, bit.map(Post::Bit), schedule).await?;
        posts
            .into_iter()
            .map(|(p, post)| match post {
                Post::Bit(b) => Ok((p, b)),
                _ => Err(TransportError::Protocol("unexpected post".into())),
            })
            .collect::<Result<_, _>>()
            .map(Announcements)
    }

    /// Two sub-phases: every announcer posts a salted commitment, then
    /// reveals. A reveal that does not open its commitment aborts the round,
    /// naming the first offending party in schedule order.
    pub async fn commit_reveal_exchange(
        &mut self,
        round: RoundId,
        my_bit: Option<bool>,
        schedule: &[PartyId],
    ) -> Result<Announcements, TransportError> {
        let me = self.me;
        let mut salt = [0u8; SALT_LEN];
        self.salt_rng.fill_bytes(&mut salt);
        let commit_post = my_bit.map(|b| Post::Commit(commit::commitment(round, me, b, &salt)));
        let commits = self.phase_exchange(round, Phase::Commit, commit_post, schedule).await?;

        let flip = self.hub.borrow().policy.flips(me, round.seq);
        let reveal_post = my_bit.map(|b| Post::Reveal(b ^ flip, salt));
        let reveals = self.phase_exchange(round, Phase::Reveal, reveal_post, schedule).await?;

        let mut out = Vec::with_capacity(schedule.len());
        for ((p, c), (_, r)) in commits.into_iter().zip(reveals) {
            match (c, r) {
                (Post::Commit(digest), Post::Reveal(bit, salt)) => {
                    if !commit::verify(&digest, round, p, bit, &salt) {
                        return Err(TransportError::CommitmentMismatch(p));
                    }
                    out.push((p, bit));
                }
                _ => return Err(TransportError::Protocol("unexpected post".into())),
            }
        }
        Ok(Announcements(out))
    }
}

impl Transport for SimTransport {
    fn me(&self) -> PartyId {
        self.me
    }

    fn n(&self) -> usize {
        self.hub.borrow().n
    }

    async fn round_exchange(
        &mut self,
        round: RoundId,
        my_bit: Option<bool>,
        schedule: &[PartyId],
    ) -> Result<Announcements, TransportError> {
        let announcing = schedule.contains(&self.me);
        if announcing != my_bit.is_some() {
            return Err(TransportError::Protocol(format!(
                "{} announcing={announcing} but bit={my_bit:?}",
                self.me
            )));
        }
        if self.hub.borrow().commit_reveal {
            self.commit_reveal_exchange(round, my_bit, schedule).await
        } else {
            self.plain_exchange(round, my_bit, schedule).await
        }
    }
}

struct Flag(AtomicBool);

impl ArcWake for Flag {
    fn wake_by_ref(arc_self: &Arc<Self>) {
        arc_self.0.store(true, Ordering::SeqCst);
    }
}

/// Runs a future (typically a join of all parties) to completion on the
/// current thread. Returns [`TransportError::Stalled`] if a poll makes no
/// progress and nothing was woken, which in a closed simulation means
/// deadlock.
pub fn drive<F: Future>(fut: F) -> Result<F::Output, TransportError> {
    let flag = Arc::new(Flag(AtomicBool::new(false)));
    let w = waker(Arc::clone(&flag));
    let mut cx = Context::from_waker(&w);
    let mut fut = pin!(fut);
    loop {
        flag.0.store(false, Ordering::SeqCst);
        if let Poll::Ready(v) = fut.as_mut().poll(&mut cx) {
            return Ok(v);
        }
        if !flag.0.load(Ordering::SeqCst) {
            return Err(TransportError::Stalled);
        }
    }
}
