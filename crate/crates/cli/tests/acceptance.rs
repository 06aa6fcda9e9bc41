//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Every expected value here comes from an oracle computed in this file
//! (plain histograms, big-integer products, brute-force checks), never from
//! the code under test.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use boardroom::ballot::{collusion_unmask_demo, count_primes_below, primes_below};
use boardroom::elgamal::{aggregate, apply_shares, combine, encrypt, keygen, product_of, share_for_product};
use boardroom::group::GroupParams;
use boardroom::ot::{open_blob, OtChoice, OtnReceiver, OtnSender};
use boardroom::protocol::{DistributorSetup, ElectionConfig, ElectionResult, PartySeed, ProtocolMessage, ResultStatus};
use boardroom::simulation::{permutations, simulate, Fault, Schedule, SimulationOutcome, SimulationSpec};
use boardroom::transport::{log_file_name, simulation_signing_key, BusLog, LogEntry};
use boardroom::PartyId;
use boardroom_cli::{cmd_simulate, cmd_tally, run_simulation, ElectionArgs, Instrumentation, SimulateArgs};
use boardroom_net::{run_node, NodeOptions, NodeRole, Relay};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn histogram(choices: &[usize], m: usize) -> Vec<u64> {
    let mut h = vec![0u64; m];
    for &c in choices {
        h[c] += 1;
    }
    h
}

fn messages(log: &BusLog, params: &GroupParams) -> Vec<(PartyId, ProtocolMessage)> {
    log.entries()
        .iter()
        .filter_map(|e| match e {
            LogEntry::Envelope(env) => Some((env.sender, ProtocolMessage::decode(&env.payload, params).expect("decodes"))),
            LogEntry::Lane(_) => None,
        })
        .collect()
}

/// Product of every vote `b`, every decryption share and the unmask factor,
/// taken directly from the log with big-integer arithmetic.
fn product_from_log(log: &BusLog, params: &GroupParams) -> BigUint {
    let q = params.modulus();
    let mut acc = BigUint::from(1u32);
    for (_, m) in messages(log, params) {
        let factor = match &m {
            ProtocolMessage::EncryptedVote { ciphertext } => ciphertext.b.value().clone(),
            ProtocolMessage::DistributorShare { value, .. } | ProtocolMessage::VoterShare { value, .. } => value.value().clone(),
            ProtocolMessage::UnmaskReveal { unmask, .. } => unmask.value().clone(),
            _ => continue,
        };
        acc = acc * factor % q;
    }
    acc
}

fn simulate_args(voters: u32, preset: Option<&str>, choices: &[usize], seed: u64) -> SimulateArgs {
    SimulateArgs {
        election: ElectionArgs {
            election_id: "acceptance".into(),
            voters,
            preset: preset.map(str::to_string),
            ..ElectionArgs::default()
        },
        seed,
        choices: choices.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        fault: None,
        log: None,
    }
}

fn worked_example_at(preset: Option<&str>, limit: Duration) -> Check {
    let choices = [1usize, 2, 1, 0];
    let args = simulate_args(4, preset, &choices, 5);
    let start = Instant::now();
    let printed = cmd_simulate(&args).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let doc: serde_json::Value = serde_json::from_str(&printed.stdout).map_err(|e| e.to_string())?;
    let result: ElectionResult = serde_json::from_value(doc["result"].clone()).map_err(|e| e.to_string())?;

    let exps = result.exponents.clone().ok_or("no exponents")?;
    let sum: u32 = exps.iter().sum();
    ensure(sum == 4, || format!("exponent sum {sum}, expected 4"))?;
    let expected = histogram(&choices, 3);
    ensure(result.totals.as_ref() == Some(&expected), || format!("totals {:?} vs {expected:?}", result.totals))?;

    // The decrypted product must equal prod p^a over the integers, with
    // nothing left over.
    let (out, _) = run_simulation(&args).map_err(|e| e.to_string())?;
    let params = &out.config.params;
    let product = product_from_log(&out.log, params);
    let encoded = result
        .primes
        .iter()
        .zip(&exps)
        .fold(BigUint::from(1u32), |acc, (&p, &a)| acc * BigUint::from(p).pow(a));
    ensure(&encoded < params.modulus(), || "encoding wraps the modulus".into())?;
    ensure(product == encoded, || format!("log product {product} != {encoded}"))?;
    let residue = &product / &encoded;
    ensure(residue == BigUint::from(1u32) && &product % &encoded == BigUint::from(0u32), || {
        format!("residue {residue}")
    })?;
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))?;
    Ok(format!(
        "{}: sum 4, residue 1, totals {expected:?}, {:.2?}",
        preset.unwrap_or("toy64"),
        elapsed
    ))
}

fn worked_example() -> Check {
    let toy = worked_example_at(None, Duration::from_secs(1))?;
    let big = worked_example_at(Some("modp2048"), Duration::from_secs(30))?;
    Ok(format!("{toy}; {big}"))
}

fn decryption_identity() -> Check {
    let params = GroupParams::toy64();
    let mut rng = ChaCha20Rng::seed_from_u64(1000);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=8u32);
        let keys: Vec<_> = (0..n).map(|i| keygen(&params, PartyId(i), &mut rng)).collect();
        let public: Vec<_> = keys.iter().map(|(_, p)| p.clone()).collect();
        let key = aggregate(&public).map_err(|e| e.to_string())?;
        let m = params.random_element(&mut rng);
        let ct = encrypt(&m, &key, &mut rng).map_err(|e| e.to_string())?.ciphertext;
        let shares: Vec<_> = keys
            .iter()
            .map(|(s, _)| share_for_product(std::slice::from_ref(&ct.a), s, b"identity"))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let got = combine(&ct.b, &shares, &key).map_err(|e| e.to_string())?;
        ensure(got == m, || format!("trial {trial} (n={n}) decrypted to a different element"))?;
    }
    Ok("1000/1000 trials exact".into())
}

fn prime_pool() -> Check {
    let sieve = primes_below(1 << 16).len();
    let counted = count_primes_below(1 << 16);
    // Trial division as the independent count.
    let oracle = (2u64..1 << 16).filter(|&k| (2..).take_while(|d| d * d <= k).all(|d| k % d != 0)).count();
    ensure(sieve == 6542 && counted == 6542 && oracle == 6542, || {
        format!("sieve {sieve}, counter {counted}, trial division {oracle}")
    })?;
    Ok("6542 primes below 65536".into())
}

fn cost_accounting() -> Check {
    let mut offsets = BTreeSet::new();
    let mut rows = Vec::new();
    for n in [2u32, 4, 8] {
        let choices: Vec<usize> = (0..n as usize).map(|i| i % 3).collect();
        let (out, _) = run_simulation(&simulate_args(n, None, &choices, 40 + n as u64)).map_err(|e| e.to_string())?;
        let inst = Instrumentation::from_outcome(&out);
        ensure(inst.broadcast_rounds == 5, || format!("n={n}: {} broadcast rounds", inst.broadcast_rounds))?;
        ensure(inst.ot_sessions == n - 1, || format!("n={n}: {} OT sessions", inst.ot_sessions))?;
        ensure(inst.table_figure == 3 * n as u64, || "table figure".into())?;
        offsets.insert(inst.table_offset);
        rows.push(format!("n={n} {}/{}", inst.table_exps, inst.table_figure));
    }
    ensure(offsets.len() == 1, || format!("offset varies with n: {offsets:?}"))?;
    Ok(format!(
        "5 rounds, n-1 OT sessions; core exps vs 3n: {} (offset {:+})",
        rows.join(", "),
        offsets.iter().next().unwrap()
    ))
}

fn random_config(rng: &mut ChaCha20Rng, i: usize) -> (ElectionConfig, Vec<usize>) {
    let n = rng.gen_range(2..=8u32);
    let m = rng.gen_range(2..=4usize);
    let lambda = rng.gen_range(1..=3u32);
    let labels: Vec<String> = (0..m).map(|c| format!("c{c}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let config = ElectionConfig::new(&format!("oracle-{i}"), n, &refs, lambda);
    let choices = (0..n).map(|_| rng.gen_range(0..m)).collect();
    (config, choices)
}

fn votes_precede_shares(out: &SimulationOutcome) -> bool {
    let msgs = messages(&out.log, &out.config.params);
    let last_vote = msgs.iter().rposition(|(_, m)| matches!(m, ProtocolMessage::EncryptedVote { .. }));
    let first_share = msgs
        .iter()
        .position(|(_, m)| matches!(m, ProtocolMessage::DistributorShare { .. } | ProtocolMessage::VoterShare { .. }));
    matches!((last_vote, first_share), (Some(v), Some(s)) if v < s)
}

/// Runs the 200 random elections once; two criteria read them.
fn random_elections() -> Vec<(Vec<usize>, usize, SimulationOutcome)> {
    let mut rng = ChaCha20Rng::seed_from_u64(200);
    (0..200)
        .map(|i| {
            let (config, choices) = random_config(&mut rng, i);
            let m = config.candidates.len();
            let out = simulate(&SimulationSpec::new(config, i as u64, choices.clone())).expect("simulates");
            (choices, m, out)
        })
        .collect()
}

fn oracle_equivalence(runs: &[(Vec<usize>, usize, SimulationOutcome)]) -> Check {
    for (i, (choices, m, out)) in runs.iter().enumerate() {
        let r = out.result.as_ref().map_err(|e| format!("election {i}: {e}"))?;
        let expected = histogram(choices, *m);
        ensure(r.totals.as_ref() == Some(&expected), || {
            format!("election {i}: totals {:?}, histogram {expected:?}", r.totals)
        })?;
    }
    Ok(format!("{}/{} elections equal the plaintext histogram", runs.len(), runs.len()))
}

fn fairness(runs: &[(Vec<usize>, usize, SimulationOutcome)]) -> Check {
    for (i, (_, _, out)) in runs.iter().enumerate() {
        ensure(votes_precede_shares(out), || format!("election {i}: a share precedes a vote"))?;
    }
    let params = GroupParams::toy64();
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    for trial in 0..100 {
        let n = rng.gen_range(2..=8u32);
        let keys: Vec<_> = (0..n).map(|i| keygen(&params, PartyId(i), &mut rng)).collect();
        let public: Vec<_> = keys.iter().map(|(_, p)| p.clone()).collect();
        let key = aggregate(&public).map_err(|e| e.to_string())?;
        let plain: Vec<_> = (0..n).map(|_| params.random_element(&mut rng)).collect();
        let cts: Vec<_> = plain
            .iter()
            .map(|m| encrypt(m, &key, &mut rng).map(|r| r.ciphertext))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let a: Vec<_> = cts.iter().map(|c| c.a.clone()).collect();
        let b = product_of(&cts.iter().map(|c| c.b.clone()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let truth = product_of(&plain).map_err(|e| e.to_string())?;
        let shares: Vec<_> = keys
            .iter()
            .map(|(s, _)| share_for_product(&a, s, b"fairness"))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(combine(&b, &shares, &key).ok() == Some(truth.clone()), || format!("trial {trial}: full set wrong"))?;
        // A random strict subset, possibly empty.
        let keep: Vec<_> = loop {
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            if mask.iter().any(|k| !k) {
                break shares.iter().zip(mask).filter(|(_, k)| *k).map(|(s, _)| s.clone()).collect();
            }
        };
        ensure(combine(&b, &keep, &key).is_err(), || format!("trial {trial}: combine accepted a subset"))?;
        let raw = apply_shares(&b, &keep).map_err(|e| e.to_string())?;
        ensure(raw != truth, || format!("trial {trial}: {} of {n} shares decrypt", keep.len()))?;
    }
    Ok(format!("votes before shares in {} runs; 100/100 strict subsets differ", runs.len()))
}

fn cheating_detection() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(50);
    let (mut negative, mut swapped) = (0, 0);
    for seed in 0..50u64 {
        let n = rng.gen_range(3..=6u32);
        let config = ElectionConfig::new(&format!("cheat-{seed}"), n, &["A", "B", "C"], 3);
        let choices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let party = PartyId(rng.gen_range(1..n));

        let spec = SimulationSpec::new(config.clone(), seed, choices.clone()).with_fault(Fault::NegativeVote { cheater: party });
        let out = simulate(&spec).map_err(|e| e.to_string())?;
        let plan = out.negative_plan.clone().ok_or("no plan")?;
        let r = out.result.as_ref().map_err(|e| e.to_string())?;
        let anomaly = r.anomaly.as_ref().ok_or_else(|| format!("seed {seed}: negative vote not detected"))?;
        let pos = r.primes.iter().position(|&p| p == plan.minus_prime).ok_or("prime missing")?;
        ensure(anomaly.exponents.get(pos) == Some(&-1), || {
            format!("seed {seed}: exponent of {} is {:?}", plan.minus_prime, anomaly.exponents.get(pos))
        })?;
        ensure(r.totals.is_none(), || format!("seed {seed}: totals published"))?;
        negative += 1;

        let spec = SimulationSpec::new(config, seed, choices).with_fault(Fault::DistributorSwap { victim: party });
        let out = simulate(&spec).map_err(|e| e.to_string())?;
        let r = out.result.as_ref().map_err(|e| e.to_string())?;
        ensure(r.status == ResultStatus::Halted && r.totals.is_none(), || format!("seed {seed}: swap not halted"))?;
        ensure(r.allegations.iter().any(|a| a.voter == party), || format!("seed {seed}: no allegation from {party}"))?;
        let msgs = messages(&out.log, &out.config.params);
        let alleged = msgs.iter().position(|(s, m)| *s == party && matches!(m, ProtocolMessage::Allegation { .. }));
        let unmasked = msgs.iter().position(|(_, m)| matches!(m, ProtocolMessage::UnmaskReveal { .. }));
        ensure(matches!((alleged, unmasked), (Some(a), Some(u)) if a < u) || (alleged.is_some() && unmasked.is_none()), || {
            format!("seed {seed}: allegation not before the unmask")
        })?;
        swapped += 1;
    }
    Ok(format!("negative vote {negative}/50 reconstructed at -1; swap {swapped}/50 alleged before tally"))
}

fn ot_correctness() -> Check {
    let params = GroupParams::toy64();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut sessions = 0;
    for n in [2usize, 9, 16] {
        let strings: Vec<Vec<u8>> = (0..n).map(|_| (0..16).map(|_| rng.gen()).collect()).collect();
        for gamma in 0..n {
            let session = (n * 100 + gamma) as u64;
            let (sender, offer) = OtnSender::new(&params, session, strings.clone(), &mut rng).map_err(|e| e.to_string())?;
            let mut receiver = OtnReceiver::new(&params, OtChoice::new(gamma, n).map_err(|e| e.to_string())?);
            let select = receiver.on_offer(&offer, &mut rng).map_err(|e| e.to_string())?;
            let transfer = sender.respond(&select, &mut rng).map_err(|e| e.to_string())?;
            let got = receiver.on_transfer(&transfer).map_err(|e| e.to_string())?;
            ensure(got == strings[gamma], || format!("N={n} choice {gamma}: wrong string"))?;
            let keys = receiver.level_keys(&transfer).map_err(|e| e.to_string())?;
            for (i, blob) in transfer.blobs.iter().enumerate() {
                if i != gamma {
                    ensure(open_blob(session, i, &keys, blob).is_none(), || format!("N={n} choice {gamma}: blob {i} opened"))?;
                }
            }
            sessions += 1;
        }
    }
    Ok(format!("{sessions} sessions over N in {{2, 9, 16}}; only the chosen blob opens"))
}

fn collusion() -> Check {
    let config = ElectionConfig::new("collusion", 4, &["A", "B", "C"], 3);
    let setup = DistributorSetup::derive(&config, &PartySeed::from_master(73, config.distributor)).map_err(|e| e.to_string())?;
    let truth = setup.mask.element().clone();
    let masked = &setup.masked.values;
    let mut pairs = 0;
    for i in 0..masked.len() {
        for j in 0..masked.len() {
            if i == j {
                continue;
            }
            let found = collusion_unmask_demo(&masked[i], &masked[j], &setup.table).map_err(|e| format!("pair ({i},{j}): {e}"))?;
            ensure(found.g_s == truth, || format!("pair ({i},{j}): wrong mask element"))?;
            ensure(found.prime_i == setup.assignment.prime(i), || format!("pair ({i},{j}): wrong prime"))?;
            pairs += 1;
        }
    }
    Ok(format!("g^s recovered exactly from all {pairs} leaked pairs"))
}

fn live_election(dir: &Path) -> Result<(ElectionConfig, ElectionResult, PathBuf), String> {
    const SEED: u64 = 21;
    let mut config = ElectionConfig::new("acceptance-live", 4, &["A", "B", "C"], 3);
    for p in config.participants() {
        config.verification_keys.insert(p, simulation_signing_key(SEED, p).verifying_key().to_bytes());
    }
    let relay = Relay::bind("127.0.0.1:0", config.clone(), Some(dir)).map_err(|e| e.to_string())?;
    let addr = relay.local_addr().to_string();
    let relay = thread::spawn(move || relay.run());
    let nodes: Vec<_> = [2usize, 0, 1, 2]
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let id = PartyId(i as u32);
            let mut o = NodeOptions::new(
                config.clone(),
                NodeRole::Party {
                    id,
                    key: simulation_signing_key(SEED, id),
                    seed: PartySeed::from_master(SEED, id),
                },
                &addr,
            );
            o.choice = Some(c);
            thread::spawn(move || run_node(o))
        })
        .collect();
    let mut live = None;
    for h in nodes {
        let report = h.join().map_err(|_| "node panicked")?.map_err(|e| e.to_string())?;
        let r = report.result.map_err(|e| e.to_string())?;
        if let Some(prev) = &live {
            ensure(prev == &r, || "nodes disagree".into())?;
        }
        live = Some(r);
    }
    relay.join().map_err(|_| "relay panicked")?.map_err(|e| e.to_string())?;
    Ok((config.clone(), live.ok_or("no nodes")?, dir.join(log_file_name(&config.election_id))))
}

fn replay_determinism() -> Check {
    let dir = std::env::temp_dir().join(format!("boardroom-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let (config, live, log_path) = live_election(&dir)?;
    let config_path = dir.join("election.toml");
    std::fs::write(&config_path, config.to_toml()).map_err(|e| e.to_string())?;
    let tallied = cmd_tally(&config_path, &log_path).map_err(|e| e.to_string())?;
    let doc: serde_json::Value = serde_json::from_str(&tallied.stdout).map_err(|e| e.to_string())?;
    let replayed: ElectionResult = serde_json::from_value(doc["result"].clone()).map_err(|e| e.to_string())?;
    let live_bytes = serde_json::to_vec(&live).unwrap();
    ensure(serde_json::to_vec(&replayed).unwrap() == live_bytes, || "tally differs from the live result".into())?;
    std::fs::remove_dir_all(&dir).ok();

    // Every within-round reordering of every batch, for n = 2, 3, 4.
    let mut orders = 0;
    for n in 2..=4u32 {
        let config = ElectionConfig::new(&format!("perm-{n}"), n, &["A", "B", "C"], 3);
        let choices: Vec<usize> = (0..n as usize).map(|i| (i * 2) % 3).collect();
        let base = simulate(&SimulationSpec::new(config.clone(), 3, choices.clone())).map_err(|e| e.to_string())?;
        let base_result = base.result.clone().map_err(|e| e.to_string())?;
        let batches = [(1u8, n as usize + 1), (2, n as usize), (3, n as usize - 1), (4, n as usize - 1)];
        for (round, size) in batches {
            let mut heads = BTreeSet::new();
            let perms = permutations(size);
            for perm in &perms {
                let schedule = Schedule::Batched(BTreeMap::from([(round, perm.clone())]));
                let out = simulate(&SimulationSpec::new(config.clone(), 3, choices.clone()).with_schedule(schedule))
                    .map_err(|e| e.to_string())?;
                let r = out.result.map_err(|e| e.to_string())?;
                ensure(serde_json::to_vec(&r).unwrap() == serde_json::to_vec(&base_result).unwrap(), || {
                    format!("n={n} round {round} order {perm:?} changed the result")
                })?;
                heads.insert(out.log.head());
                orders += 1;
            }
            // Each order must really reach the log. In round 1 the distributor
            // posts its key and its commitments, which keep their own order.
            let distinct = if round == 1 { perms.len() / 2 } else { perms.len() };
            ensure(heads.len() == distinct, || {
                format!("n={n} round {round}: {} distinct logs, expected {distinct}", heads.len())
            })?;
        }
    }
    Ok(format!("live result reproduced byte-for-byte; {orders} reorderings leave it unchanged"))
}

fn large_group_smoke() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let choices: Vec<usize> = (0..16).map(|_| rng.gen_range(0..3)).collect();
    let start = Instant::now();
    let (out, _) = run_simulation(&simulate_args(16, Some("modp2048"), &choices, 16)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r = out.result.map_err(|e| e.to_string())?;
    ensure(r.totals == Some(histogram(&choices, 3)), || format!("totals {:?}", r.totals))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("n=16 at 2048 bits matches the histogram in {elapsed:.1?}"))
}

fn main() {
    let runs = random_elections();
    let checks: Vec<(&str, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("tally-example", Box::new(worked_example)),
        ("decryption-identity", Box::new(decryption_identity)),
        ("prime-pool", Box::new(prime_pool)),
        ("cost-accounting", Box::new(cost_accounting)),
        ("oracle-equivalence", Box::new(|| oracle_equivalence(&runs))),
        ("fairness", Box::new(|| fairness(&runs))),
        ("cheating-detection", Box::new(cheating_detection)),
        ("ot-correctness", Box::new(ot_correctness)),
        ("collusion", Box::new(collusion)),
        ("replay-determinism", Box::new(replay_determinism)),
        ("large-group-smoke", Box::new(large_group_smoke)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
