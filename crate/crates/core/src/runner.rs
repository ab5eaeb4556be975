//! Orchestration: running a whole session in the simulator, or one party of
//! it over TCP.

use std::fmt;
use std::net::{SocketAddr, TcpListener};
use std::str::FromStr;
use std::sync::Arc;

use futures::executor::block_on;
use futures::future::join_all;

use crate::amd::AmdParams;
use crate::engine::{CoinSource, CollisionVerdict, EngineError, MessageOutcome, Role, SeededCoins, Session, SessionParams, Transcript};
use crate::keyfabric::{KeyError, KeyFabric, PartyId};
use crate::transport::sim::{drive, SimNetwork, SimTransport};
use crate::transport::tcp::{TcpConfig, TcpTransport};
use crate::transport::wire::AbortReason;
use crate::transport::{AdversaryPolicy, TransportError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    Broadcast,
    Veto,
    Notify,
    Collision,
    Message,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Broadcast,
        Protocol::Veto,
        Protocol::Notify,
        Protocol::Collision,
        Protocol::Message,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Broadcast => "broadcast",
            Protocol::Veto => "veto",
            Protocol::Notify => "notify",
            Protocol::Collision => "collision",
            Protocol::Message => "message",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

/// One party's private input for a protocol run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Task {
    Broadcast(bool),
    Veto(bool),
    Notify(Vec<bool>),
    Collision(bool),
    Message(Role),
}

impl Task {
    pub fn protocol(&self) -> Protocol {
        match self {
            Task::Broadcast(_) => Protocol::Broadcast,
            Task::Veto(_) => Protocol::Veto,
            Task::Notify(_) => Protocol::Notify,
            Task::Collision(_) => Protocol::Collision,
            Task::Message(_) => Protocol::Message,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartyOutcome {
    Parity(bool),
    Veto(bool),
    Notified(bool),
    Collision(CollisionVerdict),
    Message(MessageOutcome),
}

impl fmt::Display for PartyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyOutcome::Parity(b) => write!(f, "parity {}", *b as u8),
            PartyOutcome::Veto(b) => write!(f, "veto {}", *b as u8),
            PartyOutcome::Notified(b) => write!(f, "notified {}", *b as u8),
            PartyOutcome::Collision(v) => write!(f, "collision {v}"),
            PartyOutcome::Message(m) => write!(f, "message {m}"),
        }
    }
}

/// Runs `task` to completion on one session and records the outcome in its
/// transcript. Message tasks need the public AMD parameters.
pub async fn run_task<T: crate::transport::Transport>(
    s: &mut Session<T>,
    task: &Task,
    amd: Option<&AmdParams>,
) -> Result<PartyOutcome, EngineError> {
    let out = match task {
        Task::Broadcast(x) => PartyOutcome::Parity(s.parity_round(*x, None).await?.parity),
        Task::Veto(x) => PartyOutcome::Veto(s.run_veto(*x).await?),
        Task::Notify(targets) => PartyOutcome::Notified(s.run_notification(targets).await?),
        Task::Collision(x) => PartyOutcome::Collision(s.run_collision_detection(*x).await?),
        Task::Message(role) => {
            let amd = amd.ok_or_else(|| EngineError::InvalidInput("message run without AMD parameters".into()))?;
            PartyOutcome::Message(s.run_message_transmission(role, amd).await?)
        }
    };
    s.record_outcome(&out);
    Ok(out)
}

/// Everything that parameterises a simulated session.
#[derive(Clone, Debug)]
pub struct SimSetup {
    pub params: SessionParams,
    pub policy: AdversaryPolicy,
    pub commit_reveal: bool,
    pub coin_seed: u64,
}

impl SimSetup {
    pub fn new(params: SessionParams) -> Self {
        SimSetup {
            params,
            policy: AdversaryPolicy::Honest,
            commit_reveal: false,
            coin_seed: 0,
        }
    }

    pub fn with_policy(mut self, policy: AdversaryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_coin_seed(mut self, seed: u64) -> Self {
        self.coin_seed = seed;
        self
    }

    pub fn with_commit_reveal(mut self, on: bool) -> Self {
        self.commit_reveal = on;
        self
    }
}

/// Per-party results of a simulation, indexed by party.
#[derive(Debug)]
pub struct SimRun<R> {
    pub outputs: Vec<R>,
    pub transcripts: Vec<Transcript>,
    pub ledgers: Vec<Vec<u64>>,
}

impl<R> SimRun<R> {
    /// All parties observed identical announcement sequences.
    pub fn transcripts_agree(&self) -> bool {
        self.transcripts.windows(2).all(|w| w[0].entries == w[1].entries)
    }
}

/// Runs `f` for every party of a simulated session, each party drawing its
/// private coins from `SeededCoins(setup.coin_seed, party)`.
pub fn simulate<R, F>(fabric: &Arc<KeyFabric>, setup: &SimSetup, f: F) -> Result<SimRun<R>, EngineError>
where
    F: AsyncFn(&mut Session<SimTransport>) -> R,
{
    let coins = PartyId::all(setup.params.n)
        .map(|p| Box::new(SeededCoins::new(setup.coin_seed, p)) as Box<dyn CoinSource>)
        .collect();
    simulate_with_coins(fabric, setup, coins, f)
}

/// As [`simulate`], with explicit per-party coin sources.
pub fn simulate_with_coins<R, F>(
    fabric: &Arc<KeyFabric>,
    setup: &SimSetup,
    coins: Vec<Box<dyn CoinSource>>,
    f: F,
) -> Result<SimRun<R>, EngineError>
where
    F: AsyncFn(&mut Session<SimTransport>) -> R,
{
    let n = setup.params.n;
    if coins.len() != n {
        return Err(EngineError::InvalidParams(format!("{} coin sources for {n} parties", coins.len())));
    }
    let net = SimNetwork::new(n, setup.params.session_id, setup.policy.clone()).with_commit_reveal(setup.commit_reveal);
    let mut sessions = net
        .endpoints()
        .into_iter()
        .zip(coins)
        .map(|(t, c)| Session::new(setup.params, Arc::clone(fabric), t, c))
        .collect::<Result<Vec<_>, _>>()?;
    let outputs = drive(join_all(sessions.iter_mut().map(|s| f(s))))?;
    Ok(SimRun {
        outputs,
        transcripts: sessions.iter().map(|s| s.transcript().clone()).collect(),
        ledgers: sessions.iter().map(|s| s.ledger().to_vec()).collect(),
    })
}

/// Runs one task per party in the simulator.
pub fn simulate_tasks(
    fabric: &Arc<KeyFabric>,
    setup: &SimSetup,
    tasks: &[Task],
    amd: Option<&AmdParams>,
) -> Result<SimRun<Result<PartyOutcome, EngineError>>, EngineError> {
    if tasks.len() != setup.params.n {
        return Err(EngineError::InvalidInput(format!("{} tasks for {} parties", tasks.len(), setup.params.n)));
    }
    simulate(fabric, setup, async |s: &mut Session<SimTransport>| {
        let task = &tasks[s.me().index()];
        run_task(s, task, amd).await
    })
}

/// Result of one party's TCP run.
#[derive(Debug)]
pub struct NodeRun {
    pub outcome: PartyOutcome,
    pub transcript: Transcript,
    pub ledger: Vec<u64>,
}

fn abort_reason(e: &EngineError) -> AbortReason {
    match e {
        EngineError::Keys(KeyError::KeysDepleted { .. }) => AbortReason::KeysDepleted,
        EngineError::Transport(TransportError::Timeout(_)) => AbortReason::Timeout,
        EngineError::Transport(TransportError::CommitmentMismatch(_)) => AbortReason::CommitmentMismatch,
        _ => AbortReason::Protocol,
    }
}

/// Joins the TCP mesh as party `me` and runs `task`. On failure the other
/// parties are sent an ABORT frame.
#[allow(clippy::too_many_arguments)]
pub fn run_tcp_node(
    fabric: Arc<KeyFabric>,
    params: SessionParams,
    me: PartyId,
    listener: TcpListener,
    endpoints: &[SocketAddr],
    config: TcpConfig,
    coin_seed: u64,
    task: &Task,
    amd: Option<&AmdParams>,
) -> Result<NodeRun, EngineError> {
    let transport = TcpTransport::establish(me, params.session_id, listener, endpoints, config)?;
    let mut session = Session::new(params, fabric, transport, Box::new(SeededCoins::new(coin_seed, me)))?;
    match block_on(run_task(&mut session, task, amd)) {
        Ok(outcome) => Ok(NodeRun {
            outcome,
            transcript: session.transcript().clone(),
            ledger: session.ledger().to_vec(),
        }),
        Err(e) => {
            session.transport_mut().abort(abort_reason(&e));
            Err(e)
        }
    }
}

/// Runs every party of a session in its own thread over real TCP sockets
/// on 127.0.0.1, each with its own coins `SeededCoins(coin_seed, party)`.
pub fn run_tcp_loopback(
    fabric: &Arc<KeyFabric>,
    params: SessionParams,
    config: &TcpConfig,
    coin_seed: u64,
    tasks: &[Task],
    amd: Option<&AmdParams>,
) -> Result<Vec<Result<NodeRun, EngineError>>, EngineError> {
    let n = params.n;
    if tasks.len() != n {
        return Err(EngineError::InvalidInput(format!("{} tasks for {n} parties", tasks.len())));
    }
    let listeners = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<Result<Vec<_>, _>>()
        .map_err(TransportError::from)?;
    let endpoints = listeners
        .iter()
        .map(TcpListener::local_addr)
        .collect::<Result<Vec<_>, _>>()
        .map_err(TransportError::from)?;
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = listeners
            .into_iter()
            .zip(tasks)
            .enumerate()
            .map(|(i, (listener, task))| {
                let (fabric, endpoints, config) = (Arc::clone(fabric), &endpoints, config.clone());
                scope.spawn(move || run_tcp_node(fabric, params, PartyId(i as u8), listener, endpoints, config, coin_seed, task, amd))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("party thread panicked")).collect()
    }))
}
