//! Command implementations behind the `boardroom` binary.
//!
//! Every command returns a [`CmdOutput`] or a [`CliError`]; the binary only
//! prints and exits. Errors render as one line, `error[code]: reason`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ed25519_dalek::SigningKey;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::Serialize;
use serde_json::{json, Value};

use boardroom::audit::audit;
use boardroom::ballot::{collusion_search_space, collusion_unmask_demo, LambdaPolicy};
use boardroom::group::{generate_params, validate_params, GroupParams, Preset};
use boardroom::protocol::{
    planned_index, Counters, DistributorSetup, ElectionConfig, ElectionResult, FinalizeError,
    Misbehavior, PartySeed, ResultStatus,
};
use boardroom::simulation::{random_choices, simulate, Fault, SimulationOutcome, SimulationSpec};
use boardroom::transport::{replay, simulation_signing_key, BusLog, ReplayError};
use boardroom::PartyId;
use boardroom_net::{run_node, NodeOptions, NodeReport, NodeRole, Relay, UiLane};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code {
            "usage" | "config" => 2,
            "io" => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.code, one_line)
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::new("config", e.to_string())
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdOutput {
    pub stdout: String,
    /// Non-fatal notes for stderr.
    pub notes: Vec<String>,
    pub exit: i32,
}

/// Exit status for a finished election: zero only when nothing was flagged.
pub fn result_exit(result: &Result<ElectionResult, FinalizeError>) -> i32 {
    match result {
        Ok(r) if r.status == ResultStatus::Complete => 0,
        _ => 1,
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json");
    s.push('\n');
    s
}

/// Election parameters given on the command line instead of a config file.
#[derive(Debug, Clone)]
pub struct ElectionArgs {
    pub config: Option<PathBuf>,
    pub election_id: String,
    pub voters: u32,
    pub candidates: Vec<String>,
    pub lambda: u32,
    pub preset: Option<String>,
    pub strict_lambda: bool,
    pub ea_mode: bool,
}

impl Default for ElectionArgs {
    fn default() -> Self {
        ElectionArgs {
            config: None,
            election_id: "boardroom".into(),
            voters: 4,
            candidates: vec!["A".into(), "B".into(), "C".into()],
            lambda: 3,
            preset: None,
            strict_lambda: false,
            ea_mode: false,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ElectionConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    ElectionConfig::from_toml(&text).map_err(config_err)
}

impl ElectionArgs {
    /// Builds the configuration; flags given alongside a config file
    /// tighten it (`--strict-lambda`) or switch authority mode on.
    pub fn resolve(&self) -> Result<(ElectionConfig, Vec<String>), CliError> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => {
                let labels: Vec<&str> = self.candidates.iter().map(String::as_str).collect();
                let mut c = ElectionConfig::new(&self.election_id, self.voters, &labels, self.lambda);
                if let Some(name) = &self.preset {
                    c = c.with_preset(name.parse::<Preset>().map_err(config_err)?);
                }
                c
            }
        };
        if self.strict_lambda {
            config.strict_lambda = true;
        }
        if self.ea_mode && !config.ea_mode {
            if !config.verification_keys.is_empty() {
                return Err(CliError::new(
                    "config",
                    "--ea-mode changes the roster; set ea_mode in the config file instead",
                ));
            }
            config = config.with_ea_mode();
        }
        config.validate().map_err(config_err)?;
        let mut notes = Vec::new();
        if let LambdaPolicy::Warning(w) = config.lambda_policy() {
            notes.push(format!("warning: {w}"));
        }
        Ok((config, notes))
    }
}

/// Parses `--choices`: `random` or comma-separated indices or labels.
pub fn parse_choices(text: &str, config: &ElectionConfig, seed: u64) -> Result<Vec<usize>, CliError> {
    let n = config.voters as usize;
    if text.trim() == "random" {
        return Ok(random_choices(seed, n, config.candidates.len()));
    }
    let choices: Vec<usize> = text
        .split(',')
        .map(|t| parse_candidate(t.trim(), config))
        .collect::<Result<_, _>>()?;
    if choices.len() != n {
        return Err(CliError::new(
            "usage",
            format!("{} choices given for {n} voters", choices.len()),
        ));
    }
    Ok(choices)
}

pub fn parse_candidate(text: &str, config: &ElectionConfig) -> Result<usize, CliError> {
    if let Ok(i) = text.parse::<usize>() {
        if i < config.candidates.len() {
            return Ok(i);
        }
        return Err(CliError::new("usage", format!("candidate index {i} out of range")));
    }
    config
        .candidates
        .iter()
        .position(|c| c == text)
        .ok_or_else(|| CliError::new("usage", format!("unknown candidate `{text}`")))
}

#[derive(Debug, Clone, Serialize)]
pub struct Instrumentation {
    pub voters: u32,
    pub broadcast_rounds: u32,
    pub ot_sessions: u32,
    /// Exponentiations outside OT, counted at every call site.
    pub core_exps: u64,
    /// Same work under the cost-table convention: one per key, encryption,
    /// decryption share, plus the distributor's mask and unmask.
    pub table_exps: u64,
    /// The cost table's per-election figure, three per voter.
    pub table_figure: u64,
    pub table_offset: i64,
    pub ot_exps: u64,
    pub broadcasts: u64,
    pub per_party: Vec<(PartyId, Counters)>,
}

impl Instrumentation {
    pub fn from_outcome(out: &SimulationOutcome) -> Self {
        let total = out.counters();
        let (rounds, sessions) = match &out.result {
            Ok(r) => (r.counters.broadcast_rounds, r.counters.ot_sessions),
            Err(_) => (0, 0),
        };
        let figure = 3 * out.config.voters as u64;
        Instrumentation {
            voters: out.config.voters,
            broadcast_rounds: rounds,
            ot_sessions: sessions,
            core_exps: total.core_exps(),
            table_exps: total.table_exps(),
            table_figure: figure,
            table_offset: total.table_exps() as i64 - figure as i64,
            ot_exps: total.ot_exps,
            broadcasts: total.broadcasts,
            per_party: out
                .parties
                .iter()
                .map(|p| (p.id(), p.counters().clone()))
                .collect(),
        }
    }
}

fn result_value(result: &Result<ElectionResult, FinalizeError>) -> (Value, Option<String>) {
    match result {
        Ok(r) => (serde_json::to_value(r).expect("json"), None),
        Err(e) => (Value::Null, Some(e.to_string())),
    }
}

fn evidence(log: &BusLog, log_file: Option<&Path>) -> Value {
    json!({
        "log_entries": log.len(),
        "log_head": hex::encode(log.head()),
        "log_file": log_file.map(|p| p.display().to_string()),
    })
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub election: ElectionArgs,
    pub seed: u64,
    pub choices: String,
    pub fault: Option<String>,
    pub log: Option<PathBuf>,
}

pub fn run_simulation(args: &SimulateArgs) -> Result<(SimulationOutcome, Vec<String>), CliError> {
    let (config, notes) = args.election.resolve()?;
    let choices = parse_choices(&args.choices, &config, args.seed)?;
    let fault = match &args.fault {
        Some(f) => f.parse::<Fault>().map_err(|e| CliError::new("usage", e))?,
        None => Fault::None,
    };
    let spec = SimulationSpec::new(config, args.seed, choices).with_fault(fault);
    let out = simulate(&spec).map_err(|e| CliError::new("simulation", e.to_string()))?;
    Ok((out, notes))
}

/// Runs every party in process and prints the result document.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<CmdOutput, CliError> {
    let (out, notes) = run_simulation(args)?;
    if let Some(path) = &args.log {
        out.log.save(path).map_err(|e| io_err(path, e))?;
    }
    let (result, error) = result_value(&out.result);
    let mut doc = json!({
        "result": result,
        "evidence": evidence(&out.log, args.log.as_deref()),
        "instrumentation": Instrumentation::from_outcome(&out),
    });
    if let Some(e) = error {
        doc["error"] = Value::String(e);
    }
    if let Some(plan) = &out.negative_plan {
        doc["evidence"]["injected"] = json!({
            "fault": "negative-vote",
            "cheater": plan.cheater,
            "minus_prime": plan.minus_prime,
        });
    }
    Ok(CmdOutput {
        stdout: pretty(&doc),
        notes,
        exit: result_exit(&out.result),
    })
}

fn replay_result(config: &ElectionConfig, log: &BusLog) -> Result<Result<ElectionResult, FinalizeError>, CliError> {
    match replay(config, log) {
        Ok(r) => Ok(Ok(r)),
        Err(ReplayError::Finalize(e)) => Ok(Err(e)),
        Err(ReplayError::Transport(e)) => Err(CliError::new("log", e.to_string())),
    }
}

/// Recomputes the result from a persisted log.
pub fn cmd_tally(config: &Path, log_path: &Path) -> Result<CmdOutput, CliError> {
    let config = load_config(config)?;
    let log = BusLog::load(log_path).map_err(|e| CliError::new("log", format!("{}: {e}", log_path.display())))?;
    let result = replay_result(&config, &log)?;
    let (value, error) = result_value(&result);
    let mut doc = json!({
        "result": value,
        "evidence": evidence(&log, Some(log_path)),
        "instrumentation": result.as_ref().ok().map(|r| &r.counters),
    });
    if let Some(e) = error {
        doc["error"] = Value::String(e);
    }
    Ok(CmdOutput {
        stdout: pretty(&doc),
        notes: Vec::new(),
        exit: result_exit(&result),
    })
}

pub fn cmd_audit(config: &Path, log_path: &Path) -> Result<CmdOutput, CliError> {
    let config = load_config(config)?;
    let log = match BusLog::load(log_path) {
        Ok(log) => log,
        Err(e) => {
            let doc = json!({
                "election_id": config.election_id,
                "ok": false,
                "checks": [{"name": "digest-chain", "ok": false, "detail": e.to_string()}],
            });
            return Ok(CmdOutput {
                stdout: pretty(&doc),
                notes: Vec::new(),
                exit: 1,
            });
        }
    };
    let report = audit(&config, &log);
    let mut notes = Vec::new();
    for c in report.failed() {
        notes.push(format!("audit failed: {} ({})", c.name, c.detail));
    }
    Ok(CmdOutput {
        stdout: pretty(&serde_json::to_value(&report).expect("json")),
        notes,
        exit: if report.ok { 0 } else { 1 },
    })
}

pub fn cmd_params(preset: Option<&str>, bits: Option<u64>) -> Result<CmdOutput, CliError> {
    let (params, source) = match (preset, bits) {
        (Some(_), Some(_)) => return Err(CliError::new("usage", "give --preset or --bits, not both")),
        (_, Some(bits)) => (
            generate_params(bits, &mut OsRng).map_err(config_err)?,
            format!("generated {bits}-bit"),
        ),
        (p, None) => {
            let preset: Preset = p.unwrap_or("toy64").parse().map_err(config_err)?;
            (preset.params(), format!("preset {}", preset.name()))
        }
    };
    let issues: Vec<String> = match validate_params(&params) {
        Ok(()) => Vec::new(),
        Err(v) => v.iter().map(ToString::to_string).collect(),
    };
    let file = params.to_file();
    let doc = json!({
        "source": source,
        "bits": params.bit_length(),
        "modulus": file.modulus,
        "generator": file.generator,
        "valid": issues.is_empty(),
        "issues": issues,
    });
    Ok(CmdOutput {
        stdout: pretty(&doc),
        notes: Vec::new(),
        exit: if issues.is_empty() { 0 } else { 1 },
    })
}

pub fn key_file(dir: &Path, party: PartyId) -> PathBuf {
    dir.join("keys").join(format!("P{}.key", party.0))
}

/// Writes `election.toml` with a fresh roster and one key file per party.
/// A seed makes the keys reproducible; use it only for demos.
pub fn cmd_init(election: &ElectionArgs, out: &Path, seed: Option<u64>) -> Result<CmdOutput, CliError> {
    let (mut config, notes) = ElectionArgs {
        config: None,
        ..election.clone()
    }
    .resolve()?;
    std::fs::create_dir_all(out.join("keys")).map_err(|e| io_err(out, e))?;
    for p in config.participants() {
        let key = match seed {
            Some(s) => simulation_signing_key(s, p),
            None => {
                let mut bytes = [0u8; 32];
                OsRng.fill_bytes(&mut bytes);
                SigningKey::from_bytes(&bytes)
            }
        };
        config.verification_keys.insert(p, key.verifying_key().to_bytes());
        let path = key_file(out, p);
        std::fs::write(&path, format!("{}\n", hex::encode(key.to_bytes()))).map_err(|e| io_err(&path, e))?;
    }
    let path = out.join("election.toml");
    std::fs::write(&path, config.to_toml()).map_err(|e| io_err(&path, e))?;
    Ok(CmdOutput {
        stdout: format!(
            "wrote {} and {} key files under {}\n",
            path.display(),
            config.participants().len(),
            out.join("keys").display()
        ),
        notes,
        exit: 0,
    })
}

pub fn read_key(path: &Path) -> Result<SigningKey, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bytes: [u8; 32] = hex::decode(text.trim())
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| CliError::new("config", format!("{}: not a hex Ed25519 secret key", path.display())))?;
    Ok(SigningKey::from_bytes(&bytes))
}

pub fn cmd_relay(config: &Path, port: u16, log_dir: &Path, linger: Duration) -> Result<CmdOutput, CliError> {
    let config = load_config(config)?;
    std::fs::create_dir_all(log_dir).map_err(|e| io_err(log_dir, e))?;
    let relay = Relay::bind(&format!("0.0.0.0:{port}"), config.clone(), Some(log_dir))
        .map_err(|e| CliError::new("relay", e.to_string()))?
        .with_linger(linger);
    eprintln!("relay listening on {}", relay.local_addr());
    let summary = relay.run().map_err(|e| CliError::new("relay", e.to_string()))?;
    let path = log_dir.join(boardroom::transport::log_file_name(&config.election_id));
    let doc = json!({
        "evidence": evidence(&summary.log, Some(&path)),
        "rejected": summary.rejected,
    });
    Ok(CmdOutput {
        stdout: pretty(&doc),
        notes: Vec::new(),
        exit: 0,
    })
}

#[derive(Debug, Clone)]
pub struct NodeArgs {
    pub config: PathBuf,
    /// `None` runs an observer.
    pub party: Option<PartyId>,
    pub key: Option<PathBuf>,
    pub relay: String,
    pub seed: Option<u64>,
    pub choice: Option<String>,
    pub fault: Option<String>,
    pub port: Option<u16>,
    pub linger: Duration,
}

fn node_report_doc(report: &NodeReport) -> (Value, i32) {
    let result: Result<ElectionResult, FinalizeError> = match &report.result {
        Ok(r) => Ok(r.clone()),
        Err(ReplayError::Finalize(e)) => Err(e.clone()),
        Err(ReplayError::Transport(e)) => Err(FinalizeError::Incomplete(e.to_string())),
    };
    let (value, error) = result_value(&result);
    let mut doc = json!({
        "result": value,
        "evidence": evidence(&report.log, None),
        "instrumentation": report.counters,
    });
    if let Some(d) = &report.vote_digest {
        doc["evidence"]["vote_digest"] = Value::String(d.clone());
    }
    if let Some(e) = error {
        doc["error"] = Value::String(e);
    }
    (doc, result_exit(&result))
}

/// Runs a distributor, voter or observer against a relay.
pub fn cmd_node(args: &NodeArgs) -> Result<CmdOutput, CliError> {
    let config = load_config(&args.config)?;
    let role = match args.party {
        None => NodeRole::Observer,
        Some(id) => {
            if !config.is_participant(id) {
                return Err(CliError::new("config", format!("{id} is not on the roster")));
            }
            let key_path = match &args.key {
                Some(p) => p.clone(),
                None => key_file(args.config.parent().unwrap_or(Path::new(".")), id),
            };
            let seed = match args.seed {
                Some(s) => PartySeed::from_master(s, id),
                None => {
                    let mut bytes = [0u8; 32];
                    OsRng.fill_bytes(&mut bytes);
                    PartySeed::new(bytes)
                }
            };
            NodeRole::Party {
                id,
                key: read_key(&key_path)?,
                seed,
            }
        }
    };
    let mut options = NodeOptions::new(config.clone(), role, &args.relay);
    if let Some(c) = &args.choice {
        options.choice = Some(parse_candidate(c, &config)?);
    }
    if let Some(f) = &args.fault {
        let fault: Fault = f.parse().map_err(|e: String| CliError::new("usage", e))?;
        let me = args.party;
        let d = Some(config.distributor);
        options.misbehavior = match fault {
            Fault::None => Vec::new(),
            Fault::DistributorSwap { victim } if me == d => vec![Misbehavior::SwapFor(victim)],
            Fault::DropOt { victim } if me == d => vec![Misbehavior::DropOt(victim)],
            Fault::WithholdShare { party } if me == Some(party) => vec![Misbehavior::WithholdShare],
            other => {
                return Err(CliError::new(
                    "usage",
                    format!("fault `{other}` cannot be played by this role in live mode"),
                ))
            }
        };
    }
    let mut ui_lane = None;
    if let Some(port) = args.port {
        let (lane, commands) = UiLane::bind(&format!("127.0.0.1:{port}")).map_err(|e| CliError::new("io", format!("ui port {port}: {e}")))?;
        eprintln!("panel lane on ws://{}", lane.local_addr());
        ui_lane = Some(lane.clone());
        options.ui = Some((lane, commands));
    }
    let report = run_node(options).map_err(|e| match e {
        boardroom_net::NetError::Unreachable(m) => CliError::new("unreachable", m),
        other => CliError::new("node", other.to_string()),
    })?;
    if ui_lane.is_some() && !args.linger.is_zero() {
        // Keep the panel lane open so the browser can show the outcome.
        std::thread::sleep(args.linger);
    }
    let (doc, exit) = node_report_doc(&report);
    Ok(CmdOutput {
        stdout: pretty(&doc),
        notes: Vec::new(),
        exit,
    })
}

/// Attack scenarios, each reported as plain narrative lines.
pub fn cmd_attack_demo(which: &str, seed: u64) -> Result<CmdOutput, CliError> {
    match which {
        "collusion" => collusion_narrative(seed),
        "negative-vote" => fault_narrative(seed, Fault::NegativeVote { cheater: PartyId(2) }),
        "distributor-swap" => fault_narrative(seed, Fault::DistributorSwap { victim: PartyId(1) }),
        other => Err(CliError::new(
            "usage",
            format!("unknown demo `{other}`; expected collusion, negative-vote or distributor-swap"),
        )),
    }
}

fn demo_config() -> ElectionConfig {
    ElectionConfig::new("attack-demo", 4, &["A", "B", "C"], 3)
}

/// Two voters pool the masked primes they received and divide them.
pub fn collusion_outcome(seed: u64) -> Result<(bool, Vec<String>), CliError> {
    let config = demo_config();
    let table = config.table().map_err(config_err)?;
    let setup = DistributorSetup::derive(&config, &PartySeed::from_master(seed, config.distributor)).map_err(config_err)?;
    let choices = random_choices(seed, config.voters as usize, config.candidates.len());
    let colluders = [PartyId(1), PartyId(2)];
    let mut picks = Vec::new();
    for v in colluders {
        let idx = planned_index(&config, &PartySeed::from_master(seed, v), choices[v.0 as usize]).map_err(config_err)?;
        picks.push(idx);
    }
    let mut lines = vec![format!(
        "{} and {} pool the masked primes they received at indices {} and {}.",
        colluders[0], colluders[1], picks[0], picks[1]
    )];
    let (mi, mj) = (&setup.masked.values[picks[0]], &setup.masked.values[picks[1]]);
    if picks[0] == picks[1] {
        lines.push("Both picked the same index; the ratio is 1 and reveals nothing.".into());
        return Ok((false, lines));
    }
    lines.push(format!(
        "Their ratio equals p_i / p_j for exactly one ordered prime pair; {} pairs to try.",
        collusion_search_space(&table)
    ));
    match collusion_unmask_demo(mi, mj, &table) {
        Ok(found) => {
            let truth = setup.mask.element().clone();
            let matches = found.g_s == truth;
            lines.push(format!(
                "Recovered primes {} and {}, hence g^s = {}.",
                found.prime_i,
                found.prime_j,
                found.g_s.to_hex()
            ));
            lines.push(format!(
                "Distributor's real mask element:    {} ({}).",
                truth.to_hex(),
                if matches { "match" } else { "MISMATCH" }
            ));
            lines.push("With g^s known, every masked prime in the table can be unmasked before the tally.".into());
            Ok((matches, lines))
        }
        Err(e) => {
            lines.push(format!("Search failed: {e}."));
            Ok((false, lines))
        }
    }
}

fn collusion_narrative(seed: u64) -> Result<CmdOutput, CliError> {
    let (ok, lines) = collusion_outcome(seed)?;
    Ok(CmdOutput {
        stdout: lines.join("\n") + "\n",
        notes: Vec::new(),
        exit: if ok { 0 } else { 1 },
    })
}

fn fault_narrative(seed: u64, fault: Fault) -> Result<CmdOutput, CliError> {
    let config = demo_config();
    let choices = random_choices(seed, config.voters as usize, config.candidates.len());
    let spec = SimulationSpec::new(config, seed, choices.clone()).with_fault(fault.clone());
    let out = simulate(&spec).map_err(|e| CliError::new("simulation", e.to_string()))?;
    let mut lines = vec![format!("Voter choices drawn from seed {seed}: {choices:?}.")];
    let detected = match (&fault, &out.result) {
        (Fault::NegativeVote { cheater }, Ok(r)) => {
            let plan = out.negative_plan.as_ref().expect("planned");
            lines.push(format!(
                "{cheater} encrypted its masked prime squared divided by the unused masked prime {}.",
                plan.minus_prime
            ));
            match &r.anomaly {
                Some(a) => {
                    lines.push(format!("Detected at tally: {} ({}).", a.details, a.kind));
                    let rebuilt: Vec<String> = r
                        .primes
                        .iter()
                        .zip(&a.exponents)
                        .filter(|(_, e)| **e != 0)
                        .map(|(p, e)| format!("{p}^{e}"))
                        .collect();
                    lines.push(format!("Reconstructed exponents: {}.", rebuilt.join(" ")));
                    lines.push(
                        "Attribution is impossible: each vote is encrypted, and only the product shows the negative exponent."
                            .into(),
                    );
                    lines.push("Totals were withheld.".into());
                    true
                }
                None => {
                    lines.push("The tally factored cleanly; the cheat went undetected.".into());
                    false
                }
            }
        }
        (Fault::DistributorSwap { victim }, Ok(r)) => {
            lines.push(format!("The distributor served {victim} a rotated masked list over OT."));
            match r.allegations.first() {
                Some(a) => {
                    lines.push(format!(
                        "{} compared its received value with the revealed list and filed an allegation before the unmask: \"{}\".",
                        a.voter, a.claim
                    ));
                    lines.push(format!("Election status: {:?}; totals withheld.", r.status));
                    true
                }
                None => {
                    lines.push("No allegation was raised.".into());
                    false
                }
            }
        }
        (_, Err(e)) => {
            lines.push(format!("The election did not finish: {e}."));
            false
        }
        _ => false,
    };
    Ok(CmdOutput {
        stdout: lines.join("\n") + "\n",
        notes: Vec::new(),
        exit: if detected { 0 } else { 1 },
    })
}

/// Group parameters used by presets, for callers that only hold a name.
pub fn preset_params(name: &str) -> Result<GroupParams, CliError> {
    Ok(name.parse::<Preset>().map_err(config_err)?.params())
}
