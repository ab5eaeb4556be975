//! Closed-form budgets and error rates, and engine-driven Monte Carlo
//! estimates to check them against.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::amd::{AmdError, AmdParams};
use crate::bits::Bits;
use crate::engine::{EngineError, Role, Session, SessionParams};
use crate::keyfabric::{KeyError, KeyFabric, PartyId};
use crate::runner::{simulate, simulate_tasks, Protocol, SimSetup, Task};
use crate::transport::sim::SimTransport;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("repetition count {0} must be odd")]
    EvenRepetition(u32),
    #[error("message transmission needs a message length")]
    MissingMessageLength,
    #[error("expected {expected} link rates, got {got}")]
    MissingLinks { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Amd(#[from] AmdError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Keys(#[from] KeyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn pairs(n: usize) -> u64 {
    (n * (n - 1) / 2) as u64
}

/// Probability that an odd number of the other `n-1` parties also speak,
/// each independently with probability `p`.
pub fn collision_prob(p: f64, n: usize) -> f64 {
    0.5 - 0.5 * (1.0 - 2.0 * p).powi(n as i32 - 1)
}

/// Probability that an odd number of the `n(n-1)/2` pad pairs disagree,
/// each independently with probability `r_e`.
pub fn parity_error_rate(r_e: f64, n: usize) -> f64 {
    0.5 * (1.0 - (1.0 - 2.0 * r_e).powi(pairs(n) as i32))
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Error left after majority voting over `reps` independent repetitions
/// with per-repetition error `e`.
pub fn repetition_residual(e: f64, reps: u32) -> Result<f64, AnalysisError> {
    if reps.is_multiple_of(2) {
        return Err(AnalysisError::EvenRepetition(reps));
    }
    let d = (reps - 1) / 2;
    Ok((d + 1..=reps)
        .map(|i| binomial(reps, i) * e.powi(i as i32) * (1.0 - e).powi((reps - i) as i32))
        .sum())
}

/// Key consumption of one protocol execution, in network key bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyBudget {
    /// The published table value. For message transmission the fixed-role
    /// phase is counted as `m + 2(log2 m + β)` bits.
    pub table: f64,
    /// What the engine actually draws: every parity round costs one bit
    /// per pair. Equal to `table` except for message transmission.
    pub exact: u64,
}

impl KeyBudget {
    /// Bits each pair spends per execution.
    pub fn per_pair(&self, n: usize) -> f64 {
        self.exact as f64 / pairs(n) as f64
    }

    /// Budget with every parity round repeated `reps` times.
    pub fn repeated(self, reps: u32) -> KeyBudget {
        KeyBudget {
            table: self.table * reps as f64,
            exact: self.exact * reps as u64,
        }
    }
}

/// Honest, full-length key budget of `protocol`. Veto and collision
/// detection assume all-zero inputs (no early stop).
pub fn key_budget(protocol: Protocol, n: usize, beta: u32, m: Option<usize>) -> Result<KeyBudget, AnalysisError> {
    let (nn, b) = (n as u64, beta as u64);
    let veto = b * nn * nn * (nn - 1) / 2;
    let exact = |bits: u64| KeyBudget { table: bits as f64, exact: bits };
    Ok(match protocol {
        Protocol::Broadcast => exact(pairs(n)),
        Protocol::Veto | Protocol::Notify => exact(veto),
        Protocol::Collision => exact(2 * veto),
        Protocol::Message => {
            let m = m.ok_or(AnalysisError::MissingMessageLength)?;
            let encoded = AmdParams::derive(m, beta)?.encoded_len() as u64;
            // collision detection + notification + closing veto = 4 vetoes
            KeyBudget {
                table: m as f64 + 2.0 * ((m as f64).log2() + beta as f64) + 4.0 * veto as f64,
                exact: encoded * pairs(n) + 4 * veto,
            }
        }
    })
}

/// `m / (m + 2γ)`.
pub fn encoding_efficiency(m: usize, beta: u32) -> Result<f64, AnalysisError> {
    Ok(AmdParams::derive(m, beta)?.efficiency())
}

/// Executions per second when every pair must fund its share of the exact
/// budget: the slowest link sets the pace. `rates` holds one entry per pair
/// in lexicographic order, in bits per second.
pub fn throughput_estimate(rates: &[f64], protocol: Protocol, n: usize, beta: u32, m: Option<usize>) -> Result<f64, AnalysisError> {
    if rates.len() as u64 != pairs(n) {
        return Err(AnalysisError::MissingLinks {
            expected: pairs(n) as usize,
            got: rates.len(),
        });
    }
    let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(slowest / key_budget(protocol, n, beta, m)?.per_pair(n))
}

/// Formula against engine ledger for one protocol configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetReport {
    pub protocol: String,
    pub n: usize,
    pub beta: u32,
    #[serde(skip)]
    pub m: Option<usize>,
    /// Table value (may be fractional for message transmission).
    pub formula_bits: f64,
    #[serde(skip)]
    pub exact_bits: u64,
    pub measured_bits: u64,
    #[serde(skip)]
    pub matches: bool,
}

/// Full-length honest inputs for a budget measurement.
fn budget_tasks(protocol: Protocol, n: usize, m: Option<usize>) -> Result<Vec<Task>, AnalysisError> {
    Ok(match protocol {
        Protocol::Broadcast => vec![Task::Broadcast(false); n],
        Protocol::Veto => vec![Task::Veto(false); n],
        Protocol::Collision => vec![Task::Collision(false); n],
        Protocol::Notify => vec![Task::Notify(vec![false; n]); n],
        Protocol::Message => {
            let m = m.ok_or(AnalysisError::MissingMessageLength)?;
            let mut tasks = vec![Task::Message(Role::Participant); n];
            tasks[0] = Task::Message(Role::Sender {
                message: Bits::repeat(false, m),
                receiver: PartyId(1),
            });
            tasks
        }
    })
}

/// Runs `protocol` honestly in the simulator and compares the fabric's
/// consumption with [`key_budget`]. `matches` compares against the exact
/// figure.
pub fn measure_budget(protocol: Protocol, n: usize, beta: u32, m: Option<usize>, seed: u64) -> Result<BudgetReport, AnalysisError> {
    let budget = key_budget(protocol, n, beta, m)?;
    let fabric = Arc::new(KeyFabric::generate(n, budget.per_pair(n).ceil() as usize, 0.0, seed)?);
    let amd = m.map(|m| AmdParams::derive(m, beta)).transpose()?;
    let setup = SimSetup::new(SessionParams::new(seed, n, beta)).with_coin_seed(seed);
    let run = simulate_tasks(&fabric, &setup, &budget_tasks(protocol, n, m)?, amd.as_ref())?;
    for o in run.outputs {
        o?;
    }
    let measured = fabric.consumed_total();
    Ok(BudgetReport {
        protocol: protocol.name().into(),
        n,
        beta,
        m,
        formula_bits: budget.table,
        exact_bits: budget.exact,
        measured_bits: measured,
        matches: measured == budget.exact,
    })
}

/// Observed event count over a number of trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McEstimate {
    pub hits: u64,
    pub trials: u64,
}

impl McEstimate {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    /// Binomial standard deviation of the rate under probability `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// `|rate - p| <= 3σ(p)`.
    pub fn within_3sigma(&self, p: f64) -> bool {
        (self.rate() - p).abs() <= 3.0 * self.sigma(p)
    }
}

fn run_parity_trials(fabric: &Arc<KeyFabric>, setup: &SimSetup, inputs: &[Vec<bool>]) -> Result<Vec<bool>, AnalysisError> {
    let run = simulate(fabric, setup, async |s: &mut Session<SimTransport>| {
        let mut out = Vec::with_capacity(inputs.len());
        for trial in inputs {
            out.push(s.parity_round(trial[s.me().index()], None).await?.parity);
        }
        Ok::<_, EngineError>(out)
    })?;
    Ok(run.outputs.into_iter().next().expect("at least three parties")?)
}

/// Party 0 always speaks, every other party speaks with probability `p`;
/// counts rounds whose parity comes out 0.
pub fn mc_collision(n: usize, p: f64, trials: u64, seed: u64) -> Result<McEstimate, AnalysisError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<bool>> = (0..trials)
        .map(|_| (0..n).map(|i| i == 0 || rng.gen_bool(p)).collect())
        .collect();
    let fabric = Arc::new(KeyFabric::generate(n, trials as usize, 0.0, seed)?);
    let setup = SimSetup::new(SessionParams::new(seed, n, 1));
    let parities = run_parity_trials(&fabric, &setup, &inputs)?;
    Ok(McEstimate {
        hits: parities.iter().filter(|&&b| !b).count() as u64,
        trials,
    })
}

/// All-zero parity rounds over a fabric with pad error rate `r_e`, each
/// repeated `reps` times; counts rounds whose parity comes out 1.
pub fn mc_parity_error(n: usize, r_e: f64, reps: u32, trials: u64, seed: u64) -> Result<McEstimate, AnalysisError> {
    if reps.is_multiple_of(2) {
        return Err(AnalysisError::EvenRepetition(reps));
    }
    let fabric = Arc::new(KeyFabric::generate(n, (trials * reps as u64) as usize, r_e, seed)?);
    let mut setup = SimSetup::new(SessionParams::new(seed, n, 1));
    setup.params.repetition = reps;
    let parities = run_parity_trials(&fabric, &setup, &vec![vec![false; n]; trials as usize])?;
    Ok(McEstimate {
        hits: parities.iter().filter(|&&b| b).count() as u64,
        trials,
    })
}

/// What a coalition sees of one broadcast round: every announcement, then
/// every key bit the coalition holds (pairs touching it, lexicographic).
pub type CoalitionView = Vec<bool>;

/// Distribution of the coalition's view of a single broadcast round in
/// which only `sender` inputs 1, over all `2^(n(n-1)/2)` key assignments.
pub fn coalition_view_distribution(n: usize, coalition: &[PartyId], sender: PartyId) -> Result<BTreeMap<CoalitionView, u32>, AnalysisError> {
    let k = pairs(n) as u32;
    if k > 20 {
        return Err(AnalysisError::Invalid(format!("{k} pairs is too many to enumerate")));
    }
    if sender.index() >= n || coalition.iter().any(|c| c.index() >= n) {
        return Err(AnalysisError::Invalid("party out of range".into()));
    }
    let pair_list: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let setup = SimSetup::new(SessionParams::new(0, n, 1));
    let mut dist = BTreeMap::new();
    for keys in 0u32..1 << k {
        let key_bit = |slot: usize| keys >> slot & 1 == 1;
        let fabric = Arc::new(KeyFabric::from_pairs(
            n,
            (0..k as usize).map(|s| (Bits::repeat(key_bit(s), 1), Bits::repeat(key_bit(s), 1))).collect(),
        )?);
        let run = simulate(&fabric, &setup, async |s: &mut Session<SimTransport>| {
            s.parity_round(s.me() == sender, None).await
        })?;
        for o in run.outputs {
            o?;
        }
        let mut view: Vec<bool> = run.transcripts[0].entries.iter().map(|e| e.bit).collect();
        view.extend(
            pair_list
                .iter()
                .enumerate()
                .filter(|(_, (i, j))| coalition.iter().any(|c| c.index() == *i || c.index() == *j))
                .map(|(s, _)| key_bit(s)),
        );
        *dist.entry(view).or_insert(0) += 1;
    }
    Ok(dist)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub m: usize,
    pub beta: u32,
    pub gamma: u32,
    pub efficiency: f64,
}

/// Encoding efficiency for `m = 2^6 ..= 2^16`.
pub fn efficiency_table(beta: u32) -> Result<Vec<EfficiencyRow>, AnalysisError> {
    (6..=16)
        .map(|k| {
            let p = AmdParams::derive(1 << k, beta)?;
            Ok(EfficiencyRow {
                m: p.m,
                beta,
                gamma: p.gamma,
                efficiency: p.efficiency(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub re: f64,
    pub n: usize,
    #[serde(rename = "E_parity")]
    pub e_parity: f64,
    #[serde(rename = "E_prime_N5")]
    pub e_prime_n5: f64,
}

pub fn error_table(rates: &[f64], ns: &[usize]) -> Vec<ErrorRow> {
    rates
        .iter()
        .flat_map(|&re| ns.iter().map(move |&n| (re, n)))
        .map(|(re, n)| {
            let e = parity_error_rate(re, n);
            ErrorRow {
                re,
                n,
                e_parity: e,
                e_prime_n5: repetition_residual(e, 5).expect("5 is odd"),
            }
        })
        .collect()
}

/// Measured budgets for every protocol at `(n, β)`; message transmission
/// uses an `m`-bit message.
pub fn budget_table(n: usize, beta: u32, m: usize, seed: u64) -> Result<Vec<BudgetReport>, AnalysisError> {
    Protocol::ALL
        .into_iter()
        .map(|p| measure_budget(p, n, beta, (p == Protocol::Message).then_some(m), seed))
        .collect()
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
