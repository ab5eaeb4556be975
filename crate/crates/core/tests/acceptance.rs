//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use qanon_core::amd::{self, AmdParams, Decoded};
use qanon_core::analysis::{self, collision_prob, parity_error_rate, repetition_residual};
use qanon_core::engine::{CoinSource, ScriptedCoins};
use qanon_core::runner::{run_tcp_loopback, simulate, simulate_tasks, simulate_with_coins, Protocol};
use qanon_core::transport::sim::SimTransport;
use qanon_core::transport::tcp::TcpConfig;
use qanon_core::{AdversaryPolicy, Bits, KeyFabric, MessageOutcome, PartyId, PartyOutcome, Role, Session, SessionParams, SimSetup, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn three_sigma_upper(p: f64, trials: u64) -> f64 {
    p + 3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

fn c1_amd_worked_example() -> Outcome {
    let p = AmdParams::derive(1024, 16).map_err(|e| e.to_string())?;
    ensure(p.d == 49 && p.gamma == 22, || format!("d={} gamma={}", p.d, p.gamma))?;
    let explicit = AmdParams::with_modulus(1024, 16, "x^22+x+1".parse().unwrap()).map_err(|e| e.to_string())?;
    ensure(explicit.ctx.modulus() == p.ctx.modulus(), || format!("canonical modulus {}", p.ctx.modulus()))?;
    Ok(format!("d=49 gamma=22 modulus {}", explicit.ctx.modulus()))
}

fn c2_encoding_sizes() -> Outcome {
    let mut out = Vec::new();
    for (m, expect) in [(512, 554), (1024, 1068)] {
        let p = AmdParams::derive(m, 16).map_err(|e| e.to_string())?;
        let msg = Bits::repeat(true, m);
        let theta = Bits::repeat(false, p.gamma as usize);
        let len = amd::encode(&msg, &p, &theta).map_err(|e| e.to_string())?.len();
        ensure(len == expect, || format!("m={m}: {len} bits"))?;
        out.push(format!("{m}->{len}"));
    }
    Ok(out.join(" "))
}

fn c3_key_budgets() -> Outcome {
    let mut checked = 0;
    for n in 3..=8 {
        for beta in [2, 16] {
            for p in [Protocol::Broadcast, Protocol::Veto, Protocol::Notify, Protocol::Collision] {
                let r = analysis::measure_budget(p, n, beta, None, (n as u64) << 8 | beta as u64).map_err(|e| e.to_string())?;
                ensure(r.matches && r.formula_bits == r.measured_bits as f64, || format!("{r:?}"))?;
                checked += 1;
            }
        }
    }
    let b = analysis::measure_budget(Protocol::Broadcast, 8, 16, None, 0).map_err(|e| e.to_string())?;
    ensure(b.measured_bits == 28, || format!("broadcast n=8: {}", b.measured_bits))?;
    Ok(format!("{checked} configurations exact, broadcast n=8 = 28"))
}

fn c4_parity_oracle() -> Outcome {
    let mut rounds = 0;
    for n in 3..=6usize {
        for seed in 0..100u64 {
            let f = Arc::new(KeyFabric::generate(n, 1 << n, 0.0, seed).map_err(|e| e.to_string())?);
            let setup = SimSetup::new(SessionParams::new(seed, n, 1));
            let run = simulate(&f, &setup, async |s: &mut Session<SimTransport>| {
                let mut out = Vec::with_capacity(1 << n);
                for x in 0u32..1 << n {
                    out.push(s.parity_round(x >> s.me().index() & 1 == 1, None).await.map(|r| r.parity));
                }
                out
            })
            .map_err(|e| e.to_string())?;
            for outputs in &run.outputs {
                for (x, got) in outputs.iter().enumerate() {
                    let got = got.as_ref().map_err(|e| e.to_string())?;
                    ensure(*got == ((x as u32).count_ones() % 2 == 1), || format!("n={n} seed={seed} x={x:b}"))?;
                    rounds += 1;
                }
            }
        }
    }
    Ok(format!("{rounds} party-round checks"))
}

/// Distribution of (announcements, coalition key bits) over all key
/// assignments, per honest sender.
fn c5_anonymity() -> Outcome {
    let n = 4;
    let parties: Vec<PartyId> = PartyId::all(n).collect();
    let mut coalitions: Vec<Vec<PartyId>> = vec![vec![]];
    coalitions.extend(parties.iter().map(|&p| vec![p]));
    for i in 0..n {
        for j in i + 1..n {
            coalitions.push(vec![parties[i], parties[j]]);
        }
    }
    for coalition in &coalitions {
        let honest: Vec<PartyId> = parties.iter().copied().filter(|p| !coalition.contains(p)).collect();
        let mut dists: Vec<BTreeMap<Vec<bool>, u32>> = Vec::new();
        for &sender in &honest {
            let d = analysis::coalition_view_distribution(n, coalition, sender).map_err(|e| e.to_string())?;
            ensure(d.values().sum::<u32>() == 64, || "not 64 assignments".into())?;
            dists.push(d);
        }
        ensure(dists.windows(2).all(|w| w[0] == w[1]), || format!("coalition {coalition:?} distinguishes senders"))?;
    }
    Ok(format!("{} coalitions, 64 key assignments each", coalitions.len()))
}

fn c6_veto() -> Outcome {
    let (n, beta) = (3usize, 2u32);
    let mut failures = 0;
    for word in 0u32..64 {
        let f = Arc::new(KeyFabric::generate(n, 6, 0.0, word as u64).map_err(|e| e.to_string())?);
        let coins: Vec<Box<dyn CoinSource>> = (0..n)
            .map(|i| {
                let script = if i == 0 { (0..6).map(|k| word >> k & 1 == 1).collect() } else { Vec::new() };
                Box::new(ScriptedCoins::new(script)) as Box<dyn CoinSource>
            })
            .collect();
        let run = simulate_with_coins(&f, &SimSetup::new(SessionParams::new(1, n, beta)), coins, async |s: &mut Session<SimTransport>| {
            s.run_veto(s.me() == PartyId(0)).await
        })
        .map_err(|e| e.to_string())?;
        let out = run.outputs.into_iter().map(|o| o.map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
        ensure(out.iter().all(|&o| o == out[0]), || "parties disagree".into())?;
        failures += !out[0] as u32;
    }
    ensure(failures == 1, || format!("exhaustive failures {failures}/64"))?;

    let (n, beta, trials) = (4usize, 8u32, 10_000u64);
    let f = Arc::new(KeyFabric::generate(n, trials as usize * n * beta as usize, 0.0, 6).map_err(|e| e.to_string())?);
    let setup = SimSetup::new(SessionParams::new(6, n, beta))
        .with_coin_seed(6)
        .with_policy(AdversaryPolicy::Rushing(PartyId(3)));
    let run = simulate(&f, &setup, async |s: &mut Session<SimTransport>| {
        let mut zeros = 0u64;
        for _ in 0..trials {
            zeros += !s.run_veto(s.me() == PartyId(0)).await? as u64;
        }
        Ok::<_, qanon_core::EngineError>(zeros)
    })
    .map_err(|e| e.to_string())?;
    let zeros = *run.outputs[0].as_ref().map_err(|e| e.to_string())?;
    let bound = three_sigma_upper(2f64.powi(-8), trials);
    let freq = zeros as f64 / trials as f64;
    ensure(freq <= bound, || format!("rushing forced 0 in {zeros}/{trials}"))?;
    Ok(format!("exhaustive 1/64; rushing forced-0 {zeros}/{trials} (bound {bound:.5})"))
}

fn odd_subset_probability(p: f64, n: usize) -> f64 {
    let others = n - 1;
    (0u32..1 << others)
        .filter(|s| s.count_ones() % 2 == 1)
        .map(|s| p.powi(s.count_ones() as i32) * (1.0 - p).powi((others as u32 - s.count_ones()) as i32))
        .sum()
}

fn c7_collision_probability() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 2..=10 {
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            worst = worst.max((collision_prob(p, n) - odd_subset_probability(p, n)).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("enumeration differs by {worst:e}"))?;
    let trials = 100_000;
    let est = analysis::mc_collision(8, 0.1, trials, 7).map_err(|e| e.to_string())?;
    let p = collision_prob(0.1, 8);
    ensure(est.within_3sigma(p), || format!("MC {} vs {p}", est.rate()))?;
    Ok(format!("max |formula-enum| {worst:.1e}; MC {:.5} vs {p:.5} (σ {:.5})", est.rate(), est.sigma(p)))
}

fn c8_error_model() -> Outcome {
    let e = parity_error_rate(1e-4, 8);
    ensure((2.7e-3..=2.9e-3).contains(&e), || format!("E_parity {e}"))?;
    let trials = 100_000;
    let est = analysis::mc_parity_error(8, 1e-2, 1, trials, 8).map_err(|e| e.to_string())?;
    let p = parity_error_rate(1e-2, 8);
    ensure(est.within_3sigma(p), || format!("MC {} vs {p}", est.rate()))?;
    let e5 = repetition_residual(e, 5).map_err(|e| e.to_string())?;
    ensure((e5 - 2e-7).abs() <= 0.2 * 2e-7, || format!("E' {e5:e}"))?;
    let veto = (1.0 - e5).powi(128);
    ensure((veto - 0.99997).abs() <= 1e-4, || format!("(1-E')^128 = {veto}"))?;
    Ok(format!(
        "E_parity {e:.3e}; MC {:.5} vs {p:.5}; E' {e5:.2e}; (1-E')^128 {veto:.6}",
        est.rate()
    ))
}

fn c9_tamper_detection() -> Outcome {
    let p = AmdParams::derive(2, 1).map_err(|e| e.to_string())?;
    let word = |w: u32, len: usize| -> Bits { (0..len).map(|i| w >> (len - 1 - i) & 1 == 1).collect() };
    let (mut undetected, mut total) = (0u32, 0u32);
    for mu in 0..4 {
        for theta in 0..4 {
            let c = amd::encode(&word(mu, 2), &p, &word(theta, 2)).map_err(|e| e.to_string())?.to_bits();
            for e in 1..64 {
                total += 1;
                if let Decoded::Valid(_) = amd::decode(&(c.clone() ^ &word(e, 6)), &p).map_err(|e| e.to_string())? {
                    undetected += 1;
                }
            }
        }
    }
    ensure(2 * undetected <= total, || format!("toy undetected {undetected}/{total}"))?;

    let p = AmdParams::derive(64, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let trials = 100_000u64;
    let mut missed = 0u64;
    for _ in 0..trials {
        let msg: Bits = (0..64).map(|_| rng.gen::<bool>()).collect();
        let theta: Bits = (0..p.gamma).map(|_| rng.gen::<bool>()).collect();
        let c = amd::encode(&msg, &p, &theta).map_err(|e| e.to_string())?.to_bits();
        let offset = loop {
            let o: Bits = (0..c.len()).map(|_| rng.gen::<bool>()).collect();
            if o.any() {
                break o;
            }
        };
        if let Decoded::Valid(_) = amd::decode(&(c ^ &offset), &p).map_err(|e| e.to_string())? {
            missed += 1;
        }
    }
    let bound = three_sigma_upper(2f64.powi(-8), trials);
    ensure(missed as f64 / trials as f64 <= bound, || format!("undetected {missed}/{trials}"))?;
    Ok(format!("toy {undetected}/{total}; (64,8) {missed}/{trials} (bound {bound:.5})"))
}

fn c10_tcp_end_to_end() -> Outcome {
    let (n, beta, m, seed) = (8usize, 16u32, 1024usize, 10u64);
    let amd = AmdParams::derive(m, beta).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let msg: Bits = (0..m).map(|_| rng.gen::<bool>()).collect();
    let (sender, receiver) = (1usize, 5usize);
    let tasks: Vec<Task> = (0..n)
        .map(|i| {
            Task::Message(if i == sender {
                Role::Sender {
                    message: msg.clone(),
                    receiver: PartyId(receiver as u8),
                }
            } else {
                Role::Participant
            })
        })
        .collect();
    let params = SessionParams::new(seed, n, beta);
    let per_pair = analysis::key_budget(Protocol::Message, n, beta, Some(m)).map_err(|e| e.to_string())?.per_pair(n) as usize;

    let tcp_fabric = Arc::new(KeyFabric::generate(n, per_pair, 0.0, seed).map_err(|e| e.to_string())?);
    let nodes = run_tcp_loopback(&tcp_fabric, params, &TcpConfig::default(), seed, &tasks, Some(&amd)).map_err(|e| e.to_string())?;
    let nodes = nodes.into_iter().map(|r| r.map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    for (i, node) in nodes.iter().enumerate() {
        let expected = PartyOutcome::Message(MessageOutcome::Delivered {
            message: (i == receiver).then(|| msg.clone()),
        });
        ensure(node.outcome == expected, || format!("party {i}: {}", node.outcome))?;
    }

    let sim_fabric = Arc::new(KeyFabric::generate(n, per_pair, 0.0, seed).map_err(|e| e.to_string())?);
    let setup = SimSetup::new(params).with_coin_seed(seed);
    let sim = simulate_tasks(&sim_fabric, &setup, &tasks, Some(&amd)).map_err(|e| e.to_string())?;
    for (i, node) in nodes.iter().enumerate() {
        ensure(node.transcript == sim.transcripts[i], || format!("party {i} transcript differs from simulator"))?;
    }
    ensure(tcp_fabric.consumed_total() == sim_fabric.consumed_total(), || "consumption differs".into())?;
    Ok(format!("{} announcements per party identical to simulator", nodes[0].transcript.entries.len()))
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "AMD worked example", 1, c1_amd_worked_example),
        (2, "encoding sizes", 1, c2_encoding_sizes),
        (3, "key budgets", 10, c3_key_budgets),
        (4, "parity correctness oracle", 30, c4_parity_oracle),
        (5, "anonymity enumeration", 10, c5_anonymity),
        (6, "veto guarantees", 60, c6_veto),
        (7, "collision probability", 60, c7_collision_probability),
        (8, "error model", 120, c8_error_model),
        (9, "AMD tamper detection", 60, c9_tamper_detection),
        (10, "TCP end-to-end", 120, c10_tcp_end_to_end),
    ];
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > Duration::from_secs(limit) => Err(format!("{detail}; over the {limit}s budget")),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS  {id:>2} {name} ({:.2}s): {detail}", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {id:>2} {name} ({:.2}s): {why}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
