//! `qanon`: fabric generation, protocol sessions and analysis tables.

use std::fs::{self, File};
use std::io::BufWriter;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qanon_core::analysis::{self, key_budget, BudgetReport};
use qanon_core::descriptor::{MessageSpec, SessionDescriptor, TransportKind};
use qanon_core::engine::EngineError;
use qanon_core::keyfabric::KeyError;
use qanon_core::runner::{run_tcp_loopback, run_tcp_node, simulate_tasks, NodeRun, Protocol, SimSetup};
use qanon_core::transport::tcp::TcpConfig;
use qanon_core::{AdversaryPolicy, KeyFabric, PartyId, TransportError};

const EXIT_ABORT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;

#[derive(Parser)]
#[command(name = "qanon", version, about = "Anonymous multi-party protocols over pairwise one-time-pad keys")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key fabric file.
    Keygen(KeygenArgs),
    /// Run one protocol session in the simulator or over TCP.
    Run(Box<RunArgs>),
    /// Write the efficiency, error-rate and key-budget tables as CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(short = 'n', long = "n")]
    n: usize,
    /// Key bits per pair.
    #[arg(long)]
    bits: usize,
    /// Probability that a bit differs between the two copies of a pair.
    #[arg(long, default_value_t = 0.0)]
    re: f64,
    /// Defaults to a random seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Session descriptor (TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'n', long = "n")]
    n: Option<usize>,
    #[arg(long)]
    beta: Option<u32>,
    /// Odd repetition count for every parity round.
    #[arg(long)]
    rep: Option<u32>,
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Per-party input bits, e.g. `0,1,0,0`.
    #[arg(long, value_delimiter = ',')]
    input: Option<Vec<u8>>,
    /// Notification requests `sender:recipient`, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    notify: Option<Vec<[u8; 2]>>,
    #[arg(long)]
    sender: Option<u8>,
    #[arg(long)]
    receiver: Option<u8>,
    #[arg(long)]
    message_file: Option<PathBuf>,
    /// Message length; defaults to the size of the message file.
    #[arg(long)]
    message_bits: Option<usize>,
    /// Explicit AMD modulus, e.g. `x^22+x+1`.
    #[arg(long)]
    modulus: Option<String>,
    /// Fabric file; without one a fresh fabric is generated from the seed.
    #[arg(long)]
    fabric: Option<PathBuf>,
    #[arg(long, value_parser = parse_transport)]
    transport: Option<TransportKind>,
    /// Bind address of this node (tcp).
    #[arg(long)]
    listen: Option<String>,
    /// Endpoints of all parties in party order (tcp).
    #[arg(long, value_delimiter = ',')]
    peers: Option<Vec<String>>,
    /// Run only this party (tcp); otherwise every party runs in-process.
    #[arg(long)]
    party: Option<u8>,
    #[arg(long)]
    session: Option<u64>,
    /// Defaults to a random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// honest | rushing:P | silent:P | bitflip:P[@A..B]
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long)]
    commit_reveal: Option<bool>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value = "analysis")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pair(s: &str) -> Result<[u8; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected sender:recipient, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<u8>().map_err(|e| format!("{x:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

fn parse_transport(s: &str) -> Result<TransportKind, String> {
    match s {
        "sim" => Ok(TransportKind::Sim),
        "tcp" => Ok(TransportKind::Tcp),
        _ => Err(format!("expected sim or tcp, got {s:?}")),
    }
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: e.into(),
    }
}

fn engine_exit_code(e: &EngineError) -> u8 {
    match e {
        EngineError::Transport(TransportError::Timeout(_) | TransportError::Io(_) | TransportError::Stalled) => EXIT_TRANSPORT,
        EngineError::Transport(_) | EngineError::Keys(KeyError::KeysDepleted { .. }) => EXIT_ABORT,
        _ => EXIT_CONFIG,
    }
}

fn engine(e: EngineError) -> Failure {
    Failure {
        code: engine_exit_code(&e),
        error: e.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Run(a) => run(*a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn keygen(a: KeygenArgs) -> Result<u8, Failure> {
    let seed = a.seed.unwrap_or_else(rand::random);
    let fabric = KeyFabric::generate(a.n, a.bits, a.re, seed).map_err(config)?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display())).map_err(config)?;
    fabric.write_to(BufWriter::new(file)).map_err(config)?;
    println!("fabric {}: n={} bits/pair={} re={} seed={seed}", a.out.display(), a.n, a.bits, a.re);
    for p in fabric.pairs() {
        let (i, j) = p.parties();
        println!("  {i}-{j}: {} bits, {} mismatched", p.len(), p.mismatches());
    }
    Ok(0)
}

/// Descriptor from the config file (if any) with flags applied on top.
fn descriptor(a: RunArgs) -> Result<SessionDescriptor> {
    let mut d = match &a.config {
        Some(path) => SessionDescriptor::load(path)?,
        None => {
            let (Some(n), Some(beta), Some(protocol)) = (a.n, a.beta, a.protocol) else {
                bail!("--n, --beta and --protocol are required without --config");
            };
            SessionDescriptor::from_toml(&format!("n = {n}\nbeta = {beta}\nprotocol = \"{protocol}\""))?
        }
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = a.$flag { d.$field = v.into(); })*
        };
    }
    set!(n => n, beta => beta, rep => repetition, input => inputs, notify => notify, peers => endpoints, session => session_id);
    if let Some(p) = a.protocol {
        d.protocol = p.name().into();
    }
    set!(transport => transport, adversary => adversary);
    if a.fabric.is_some() {
        d.fabric = a.fabric;
    }
    if a.seed.is_some() {
        d.seed = a.seed;
    }
    if a.commit_reveal.is_some() {
        d.commit_reveal = a.commit_reveal;
    }
    if a.party.is_some() {
        d.party = a.party;
    }
    if a.listen.is_some() {
        d.listen = a.listen;
    }
    if a.out_dir.is_some() {
        d.out_dir = a.out_dir;
    }
    if a.sender.is_some() || a.receiver.is_some() || a.message_file.is_some() || a.message_bits.is_some() || a.modulus.is_some() {
        let m = d.message.get_or_insert_with(MessageSpec::default);
        if let Some(s) = a.sender {
            m.sender = s;
        }
        if let Some(r) = a.receiver {
            m.receiver = r;
        }
        if let Some(f) = a.message_file {
            m.file = Some(f);
            m.hex = None;
        }
        if let Some(b) = a.message_bits {
            m.bits = b;
        }
        if a.modulus.is_some() {
            m.modulus = a.modulus;
        }
    }
    if d.seed.is_none() {
        d.seed = Some(rand::random());
    }
    d.resolve_message_len()?;
    Ok(d)
}

fn run(a: RunArgs) -> Result<u8, Failure> {
    let d = descriptor(a).map_err(config)?;
    let protocol = d.protocol().map_err(config)?;
    let tasks = d.tasks().map_err(config)?;
    let amd = d.amd_params().map_err(config)?;
    let policy = d.policy().map_err(config)?;
    let params = d.params();
    let seed = d.seed.expect("seed resolved");
    let m = amd.as_ref().map(|p| p.m);
    let budget = key_budget(protocol, d.n, d.beta, m).map_err(config)?.repeated(d.repetition);

    let fabric = Arc::new(match &d.fabric {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(config)?;
            KeyFabric::read_from(std::io::BufReader::new(f)).map_err(config)?
        }
        None => KeyFabric::generate(d.n, budget.per_pair(d.n).ceil() as usize, 0.0, seed).map_err(config)?,
    });
    if fabric.n() != d.n {
        return Err(config(anyhow::anyhow!("fabric has {} parties, session {}", fabric.n(), d.n)));
    }
    let out_dir = d.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir).map_err(config)?;

    println!("session {} protocol {protocol} n={} beta={} rep={} seed={seed}", d.session_id, d.n, d.beta, d.repetition);
    if let Some(p) = &amd {
        println!("message m={} gamma={} message-phase rounds {}", p.m, p.gamma, p.encoded_len());
    }
    let parties: Vec<(PartyId, Result<NodeRun, EngineError>)> = match d.transport {
        TransportKind::Sim => {
            let setup = SimSetup::new(params).with_policy(policy.clone()).with_coin_seed(seed).with_commit_reveal(d.commit_reveal());
            let run = simulate_tasks(&fabric, &setup, &tasks, amd.as_ref()).map_err(engine)?;
            run.outputs
                .into_iter()
                .zip(run.transcripts)
                .zip(run.ledgers)
                .enumerate()
                .map(|(i, ((o, transcript), ledger))| (PartyId(i as u8), o.map(|outcome| NodeRun { outcome, transcript, ledger })))
                .collect()
        }
        TransportKind::Tcp => {
            if policy != AdversaryPolicy::Honest {
                return Err(config(anyhow::anyhow!("adversary policies are only available in the simulator")));
            }
            let tcp = TcpConfig {
                commit_reveal: d.commit_reveal(),
                ..TcpConfig::default()
            };
            match d.party {
                None if d.endpoints.is_empty() => {
                    let runs = run_tcp_loopback(&fabric, params, &tcp, seed, &tasks, amd.as_ref()).map_err(engine)?;
                    runs.into_iter().enumerate().map(|(i, r)| (PartyId(i as u8), r)).collect()
                }
                None => return Err(config(anyhow::anyhow!("--peers needs --party"))),
                Some(me) => {
                    let endpoints = d.endpoints().map_err(config)?;
                    let me = PartyId(me);
                    if me.index() >= d.n {
                        return Err(config(anyhow::anyhow!("party {me} out of range")));
                    }
                    let bind: SocketAddr = match &d.listen {
                        Some(l) => l.parse().with_context(|| format!("bad listen address {l:?}")).map_err(config)?,
                        None => endpoints[me.index()],
                    };
                    let listener = TcpListener::bind(bind)
                        .with_context(|| format!("binding {bind}"))
                        .map_err(|e| Failure {
                            code: EXIT_TRANSPORT,
                            error: e,
                        })?;
                    let r = run_tcp_node(fabric.clone(), params, me, listener, &endpoints, tcp, seed, &tasks[me.index()], amd.as_ref());
                    vec![(me, r)]
                }
            }
        }
    };

    write_outputs(&out_dir, &parties).map_err(config)?;
    let network = parties.len() == d.n;
    let measured_bits = if network {
        fabric.consumed_total()
    } else {
        parties.iter().flat_map(|(_, r)| r.as_ref().ok()).flat_map(|r| r.ledger.iter()).sum()
    };
    let report = BudgetReport {
        protocol: protocol.name().into(),
        n: d.n,
        beta: d.beta,
        m,
        formula_bits: budget.table,
        exact_bits: budget.exact,
        measured_bits,
        matches: network && measured_bits == budget.exact,
    };
    let f = File::create(out_dir.join("budget.csv")).map_err(config)?;
    analysis::write_csv(f, std::slice::from_ref(&report)).map_err(config)?;
    println!(
        "key bits: measured {} ({}), formula {} exact {}",
        report.measured_bits,
        if network { "network" } else { "this node" },
        report.formula_bits,
        report.exact_bits
    );

    let mut code = 0;
    for (p, r) in &parties {
        match r {
            Ok(run) => println!("{p}: {}", run.outcome),
            Err(e) => {
                println!("{p}: error: {e}");
                // the adversary's own failure does not fail the session
                if policy.party() != Some(*p) {
                    code = code.max(engine_exit_code(e));
                }
            }
        }
    }
    Ok(code)
}

fn write_outputs(dir: &Path, parties: &[(PartyId, Result<NodeRun, EngineError>)]) -> Result<()> {
    let mut outcomes = String::new();
    let mut ledger = String::from("party,peer,bits\n");
    for (p, r) in parties {
        match r {
            Ok(run) => {
                fs::write(dir.join(format!("transcript-{p}.log")), run.transcript.to_log())?;
                outcomes.push_str(&format!("{p} {}\n", run.outcome));
                for (peer, bits) in run.ledger.iter().enumerate() {
                    if peer != p.index() {
                        ledger.push_str(&format!("{},{peer},{bits}\n", p.0));
                    }
                }
            }
            Err(e) => outcomes.push_str(&format!("{p} error {e}\n")),
        }
    }
    fs::write(dir.join("outcome.txt"), outcomes)?;
    fs::write(dir.join("ledger.csv"), ledger)?;
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<u8, Failure> {
    fs::create_dir_all(&a.out_dir).map_err(config)?;
    let write = |name: &str, f: &dyn Fn(File) -> Result<(), analysis::AnalysisError>| -> Result<(), Failure> {
        let path = a.out_dir.join(name);
        f(File::create(&path).map_err(config)?).map_err(config)?;
        println!("wrote {}", path.display());
        Ok(())
    };
    write("efficiency.csv", &|f| analysis::write_csv(f, &analysis::efficiency_table(16)?))?;
    let rates = [1e-5, 1e-4, 1e-3, 1e-2];
    let ns: Vec<usize> = (3..=8).collect();
    write("error_rates.csv", &|f| analysis::write_csv(f, &analysis::error_table(&rates, &ns)))?;
    write("budgets.csv", &|f| analysis::write_csv(f, &analysis::budget_table(8, 16, 1024, a.seed)?))?;
    Ok(0)
}
