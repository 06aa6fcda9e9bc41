use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use boardroom::PartyId;
use boardroom_cli::{
    cmd_attack_demo, cmd_audit, cmd_init, cmd_node, cmd_params, cmd_relay, cmd_simulate, cmd_tally,
    CliError, CmdOutput, ElectionArgs, NodeArgs, SimulateArgs,
};

#[derive(Parser)]
#[command(name = "boardroom", version, about = "Self-tallying boardroom elections with masked prime ballots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ElectionFlags {
    /// Election file; overrides the shape flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "boardroom")]
    election_id: String,
    #[arg(long, default_value_t = 4)]
    voters: u32,
    /// Comma-separated candidate labels.
    #[arg(long, value_delimiter = ',', default_value = "A,B,C")]
    candidates: Vec<String>,
    /// Primes per candidate.
    #[arg(long, default_value_t = 3)]
    lambda: u32,
    /// toy64 or modp2048.
    #[arg(long)]
    preset: Option<String>,
    /// Refuse a table that is too small for the number of voters.
    #[arg(long)]
    strict_lambda: bool,
    /// Run with a separate, non-voting distributor.
    #[arg(long)]
    ea_mode: bool,
}

impl From<ElectionFlags> for ElectionArgs {
    fn from(f: ElectionFlags) -> Self {
        ElectionArgs {
            config: f.config,
            election_id: f.election_id,
            voters: f.voters,
            candidates: f.candidates,
            lambda: f.lambda,
            preset: f.preset,
            strict_lambda: f.strict_lambda,
            ea_mode: f.ea_mode,
        }
    }
}

#[derive(Args)]
struct NodeFlags {
    #[arg(long)]
    config: PathBuf,
    /// Relay address, host:port.
    #[arg(long)]
    relay: String,
    /// Seed for this node's randomness; omit for OS entropy.
    #[arg(long)]
    seed: Option<u64>,
    /// Serve the browser panel lane on this local port.
    #[arg(long)]
    port: Option<u16>,
    /// Seconds to keep the panel lane open after the election ends.
    #[arg(long, default_value_t = 30)]
    linger: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Show or generate group parameters and check them.
    Params {
        #[arg(long)]
        preset: Option<String>,
        /// Generate a fresh safe-prime group of this size.
        #[arg(long)]
        bits: Option<u64>,
    },
    /// Write an election file and one signing key per party.
    Init {
        #[command(flatten)]
        election: ElectionFlags,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Derive keys from a seed (demos only).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a whole election in process.
    Simulate {
        #[command(flatten)]
        election: ElectionFlags,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `random`, or comma-separated candidate indices or labels.
        #[arg(long, default_value = "random")]
        choices: String,
        /// negative-vote, distributor-swap, withhold-share or drop-ot, optionally `:party`.
        #[arg(long)]
        fault: Option<String>,
        /// Persist the bus log to this file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Order and log broadcasts for a live election.
    Relay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 7400)]
        port: u16,
        /// Directory for the bus log.
        #[arg(long, default_value = ".")]
        log: PathBuf,
        /// Seconds to wait for stragglers after the final round.
        #[arg(long, default_value_t = 5)]
        linger: u64,
    },
    /// Run the distributor of a live election.
    Distributor {
        #[command(flatten)]
        node: NodeFlags,
        #[arg(long)]
        party: Option<u32>,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        choice: Option<String>,
        #[arg(long)]
        fault: Option<String>,
    },
    /// Run one voter of a live election.
    Voter {
        #[command(flatten)]
        node: NodeFlags,
        #[arg(long)]
        party: u32,
        #[arg(long)]
        key: Option<PathBuf>,
        /// Vote without a panel.
        #[arg(long)]
        choice: Option<String>,
        #[arg(long)]
        fault: Option<String>,
    },
    /// Follow a live election without voting and tally it.
    Observe {
        #[command(flatten)]
        node: NodeFlags,
    },
    /// Recompute the result from a bus log.
    Tally {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Check a bus log and report every verification step.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Walk through an attack: collusion, negative-vote or distributor-swap.
    AttackDemo {
        which: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn node_args(node: NodeFlags, party: Option<u32>, key: Option<PathBuf>, choice: Option<String>, fault: Option<String>) -> NodeArgs {
    NodeArgs {
        config: node.config,
        party: party.map(PartyId),
        key,
        relay: node.relay,
        seed: node.seed,
        choice,
        fault,
        port: node.port,
        linger: Duration::from_secs(node.linger),
    }
}

fn run(command: Command) -> Result<CmdOutput, CliError> {
    match command {
        Command::Params { preset, bits } => cmd_params(preset.as_deref(), bits),
        Command::Init { election, out, seed } => cmd_init(&election.into(), &out, seed),
        Command::Simulate {
            election,
            seed,
            choices,
            fault,
            log,
        } => cmd_simulate(&SimulateArgs {
            election: election.into(),
            seed,
            choices,
            fault,
            log,
        }),
        Command::Relay {
            config,
            port,
            log,
            linger,
        } => cmd_relay(&config, port, &log, Duration::from_secs(linger)),
        Command::Distributor {
            node,
            party,
            key,
            choice,
            fault,
        } => {
            let config = boardroom_cli::load_config(&node.config)?;
            let id = party.unwrap_or(config.distributor.0);
            if PartyId(id) != config.distributor {
                return Err(CliError::new("config", format!("P{id} is not the distributor")));
            }
            if !config.ea_mode && choice.is_none() && node.port.is_none() {
                return Err(CliError::new("usage", "the distributor votes too: give --choice or --port"));
            }
            cmd_node(&node_args(node, Some(id), key, choice, fault))
        }
        Command::Voter {
            node,
            party,
            key,
            choice,
            fault,
        } => {
            if choice.is_none() && node.port.is_none() {
                return Err(CliError::new("usage", "give --choice or --port for the voting panel"));
            }
            cmd_node(&node_args(node, Some(party), key, choice, fault))
        }
        Command::Observe { node } => cmd_node(&node_args(node, None, None, None, None)),
        Command::Tally { config, log } => cmd_tally(&config, &log),
        Command::Audit { config, log } => cmd_audit(&config, &log),
        Command::AttackDemo { which, seed } => cmd_attack_demo(&which, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            for n in &out.notes {
                eprintln!("{n}");
            }
            print!("{}", out.stdout);
            ExitCode::from(out.exit as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
