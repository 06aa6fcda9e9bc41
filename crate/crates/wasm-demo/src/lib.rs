//! In-browser demo. Each export takes plain numbers and strings and returns
//! a JSON document; errors come back as `{"error": "..."}` so the page has
//! one code path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use boardroom::ballot::collusion_unmask_demo;
use boardroom::group::GroupParams;
use boardroom::ot::{open_blob, OtChoice, OtnReceiver, OtnSender};
use boardroom::protocol::{DistributorSetup, ElectionConfig, PartySeed};
use boardroom::simulation::{random_choices, simulate, Fault, SimulationSpec};

fn error(msg: impl ToString) -> Value {
    json!({ "error": msg.to_string() })
}

/// Runs a toy-group election. `choices` is `random` or comma-separated
/// candidate indices; `fault` is empty or e.g. `negative-vote:2`.
pub fn run_election(voters: u32, candidates: &str, lambda: u32, choices: &str, seed: u32, fault: &str) -> Value {
    let labels: Vec<&str> = candidates.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let config = ElectionConfig::new("browser", voters, &labels, lambda);
    if let Err(e) = config.validate() {
        return error(e);
    }
    let choices: Vec<usize> = if choices.trim() == "random" {
        random_choices(seed as u64, voters as usize, labels.len())
    } else {
        match choices.split(',').map(|c| c.trim().parse::<usize>()).collect::<Result<Vec<_>, _>>() {
            Ok(c) => c,
            Err(_) => return error("choices must be `random` or comma-separated indices"),
        }
    };
    if choices.len() != voters as usize || choices.iter().any(|&c| c >= labels.len()) {
        return error(format!("need {voters} choices, each below {}", labels.len()));
    }
    let fault = if fault.trim().is_empty() {
        Fault::None
    } else {
        match fault.parse::<Fault>() {
            Ok(f) => f,
            Err(e) => return error(e),
        }
    };
    let out = match simulate(&SimulationSpec::new(config, seed as u64, choices.clone()).with_fault(fault)) {
        Ok(o) => o,
        Err(e) => return error(e),
    };
    let counters = out.counters();
    let mut doc = json!({
        "choices": choices,
        "log_entries": out.log.len(),
        "exponentiations": counters.core_exps(),
        "ot_exponentiations": counters.ot_exps,
    });
    match out.result {
        Ok(r) => {
            doc["formatted"] = json!(r.formatted_totals());
            doc["result"] = serde_json::to_value(r).expect("json");
        }
        Err(e) => doc["error"] = json!(e.to_string()),
    }
    doc
}

/// One 1-of-N transfer, then an attempt to open every blob with the
/// receiver's keys.
pub fn run_ot(n: u32, choice: u32, seed: u32) -> Value {
    let params = GroupParams::toy64();
    let n = n as usize;
    let choice = match OtChoice::new(choice as usize, n) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed as u64);
    let strings: Vec<Vec<u8>> = (0..n).map(|i| format!("secret #{i:02}").into_bytes()).collect();
    let session = rng.gen::<u32>() as u64;
    let mut run = || -> Result<Value, boardroom::ot::OtError> {
        let (sender, offer) = OtnSender::new(&params, session, strings.clone(), &mut rng)?;
        let mut receiver = OtnReceiver::new(&params, choice);
        let select = receiver.on_offer(&offer, &mut rng)?;
        let transfer = sender.respond(&select, &mut rng)?;
        let received = receiver.on_transfer(&transfer)?;
        let keys = receiver.level_keys(&transfer)?;
        let blobs: Vec<Value> = transfer
            .blobs
            .iter()
            .enumerate()
            .map(|(i, blob)| {
                let opened = open_blob(session, i, &keys, blob);
                json!({
                    "index": i,
                    "bytes": blob.len(),
                    "opens": opened.is_some(),
                    "plaintext": opened.map(|p| String::from_utf8_lossy(&p).into_owned()),
                })
            })
            .collect();
        Ok(json!({
            "n": n,
            "choice": choice.index(),
            "levels": offer.setups.len(),
            "sender_sees": select.keys.iter().map(|k| k.pk0.to_hex()).collect::<Vec<_>>(),
            "received": String::from_utf8_lossy(&received),
            "blobs": blobs,
        }))
    };
    run().unwrap_or_else(error)
}

/// Two voters leak the masked primes at indices `i` and `j`.
pub fn run_collusion(seed: u32, i: u32, j: u32) -> Value {
    let config = ElectionConfig::new("browser", 4, &["A", "B", "C"], 3);
    let setup = match DistributorSetup::derive(&config, &PartySeed::from_master(seed as u64, config.distributor)) {
        Ok(s) => s,
        Err(e) => return error(e),
    };
    let list = &setup.masked.values;
    let (i, j) = (i as usize, j as usize);
    if i >= list.len() || j >= list.len() {
        return error(format!("indices must be below {}", list.len()));
    }
    let truth = setup.mask.element().to_hex();
    let mut doc = json!({
        "masked": list.iter().map(|m| m.to_hex()).collect::<Vec<_>>(),
        "leaked": [i, j],
        "true_mask_element": truth,
    });
    match collusion_unmask_demo(&list[i], &list[j], &setup.table) {
        Ok(found) => {
            let g_s = found.g_s.clone();
            let unmasked: Vec<Value> = list
                .iter()
                .map(|m| {
                    let plain = m.div(&g_s).ok().and_then(|e| e.to_u64());
                    json!(plain)
                })
                .collect();
            doc["recovered"] = json!({
                "mask_element": g_s.to_hex(),
                "prime_i": found.prime_i,
                "prime_j": found.prime_j,
                "matches": g_s.to_hex() == truth,
                "unmasked_list": unmasked,
            });
        }
        Err(e) => doc["failure"] = json!(e.to_string()),
    }
    doc
}

#[wasm_bindgen]
pub fn simulate_election(voters: u32, candidates: &str, lambda: u32, choices: &str, seed: u32, fault: &str) -> String {
    run_election(voters, candidates, lambda, choices, seed, fault).to_string()
}

#[wasm_bindgen]
pub fn ot_demo(n: u32, choice: u32, seed: u32) -> String {
    run_ot(n, choice, seed).to_string()
}

#[wasm_bindgen]
pub fn collusion_demo(seed: u32, i: u32, j: u32) -> String {
    run_collusion(seed, i, j).to_string()
}
