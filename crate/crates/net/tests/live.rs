use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use boardroom::protocol::{ElectionConfig, Misbehavior, PartySeed, ResultStatus};
use boardroom::simulation::{simulate, SimulationSpec};
use boardroom::transport::{log_file_name, replay, simulation_signing_key, BusLog};
use boardroom::PartyId;
use boardroom_net::{run_node, NodeOptions, NodeReport, NodeRole, Relay, UiLane};

const SEED: u64 = 11;

fn roster(id: &str, n: u32) -> ElectionConfig {
    let mut config = ElectionConfig::new(id, n, &["ada", "bo", "cy"], 3);
    for p in config.participants() {
        config
            .verification_keys
            .insert(p, simulation_signing_key(SEED, p).verifying_key().to_bytes());
    }
    config.round_timeout = Some(Duration::from_secs(2));
    config
}

fn party(config: &ElectionConfig, id: u32, relay: &str) -> NodeOptions {
    let p = PartyId(id);
    let mut o = NodeOptions::new(
        config.clone(),
        NodeRole::Party {
            id: p,
            key: simulation_signing_key(SEED, p),
            seed: PartySeed::from_master(SEED, p),
        },
        relay,
    );
    o.round_timeout = Duration::from_secs(2);
    o
}

fn spawn(options: NodeOptions) -> thread::JoinHandle<NodeReport> {
    thread::spawn(move || run_node(options).expect("node runs"))
}

#[test]
fn live_election_matches_simulation() {
    let config = roster("live-honest", 4);
    let dir = std::env::temp_dir().join(format!("boardroom-live-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let relay = Relay::bind("127.0.0.1:0", config.clone(), Some(&dir)).unwrap();
    let addr = relay.local_addr().to_string();
    let relay = thread::spawn(move || relay.run().unwrap());

    let choices = [1usize, 2, 1, 0];
    let nodes: Vec<_> = choices
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut o = party(&config, i as u32, &addr);
            o.choice = Some(c);
            spawn(o)
        })
        .collect();
    let observer = spawn(NodeOptions::new(config.clone(), NodeRole::Observer, &addr));
    let reports: Vec<NodeReport> = nodes.into_iter().map(|h| h.join().unwrap()).collect();
    let watched = observer.join().unwrap();
    let summary = relay.join().unwrap();

    let sim = simulate(&SimulationSpec::new(config.clone(), SEED, choices.to_vec())).unwrap();
    let expected = sim.result.unwrap();
    assert_eq!(expected.totals, Some(vec![1, 2, 1]));
    for r in reports.iter().chain([&watched]) {
        assert_eq!(r.result.as_ref().unwrap(), &expected);
    }
    let persisted = BusLog::load(&dir.join(log_file_name("live-honest"))).unwrap();
    assert_eq!(persisted, summary.log);
    assert_eq!(replay(&config, &persisted).unwrap(), expected);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn ws_connect(lane: &UiLane) -> WebSocket<MaybeTlsStream<TcpStream>> {
    let url = format!("ws://{}", lane.local_addr());
    let (ws, _) = tungstenite::connect(url).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(100))).unwrap();
    }
    ws
}

/// Reads events until `done` accepts one or the deadline passes.
fn read_until(ws: &mut WebSocket<MaybeTlsStream<TcpStream>>, seen: &mut Vec<Value>, done: impl Fn(&Value) -> bool) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    while Instant::now() < deadline {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(&t).unwrap();
                seen.push(v.clone());
                if done(&v) {
                    return v;
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => panic!("websocket: {e}"),
        }
    }
    panic!("no matching event; saw {seen:?}");
}

fn event_is(v: &Value, kind: &str) -> bool {
    v["event"] == kind
}

#[test]
fn panels_cast_and_see_verdicts() {
    let config = roster("live-ui", 3);
    let relay = Relay::bind("127.0.0.1:0", config.clone(), None).unwrap();
    let addr = relay.local_addr().to_string();
    let relay = thread::spawn(move || relay.run().unwrap());

    // Voter 1 is served a rotated list and must see a red verdict.
    let mut distributor = party(&config, 0, &addr);
    distributor.choice = Some(2);
    distributor.misbehavior = vec![Misbehavior::SwapFor(PartyId(1))];
    let d = spawn(distributor);

    let mut panels = Vec::new();
    let mut handles = Vec::new();
    for id in [1u32, 2] {
        let (lane, commands) = UiLane::bind("127.0.0.1:0").unwrap();
        let mut o = party(&config, id, &addr);
        o.ui = Some((lane.clone(), commands));
        o.round_timeout = Duration::from_secs(30);
        handles.push(spawn(o));
        panels.push((id, ws_connect(&lane)));
    }

    let mut logs = Vec::new();
    for (id, ws) in panels.iter_mut() {
        let mut seen = Vec::new();
        let hello = read_until(ws, &mut seen, |v| event_is(v, "hello"));
        assert_eq!(hello["role"], "voter");
        assert_eq!(hello["candidates"], serde_json::json!(["ada", "bo", "cy"]));
        read_until(ws, &mut seen, |v| event_is(v, "phase") && v["phase"] == "selecting");
        let cast = serde_json::json!({"command": "cast", "candidate": "bo"});
        ws.send(Message::text(cast.to_string())).unwrap();
        // A second click must not produce a second vote.
        ws.send(Message::text(cast.to_string())).unwrap();
        let receipt = read_until(ws, &mut seen, |v| event_is(v, "vote-cast"));
        let digest = receipt["digest"].as_str().unwrap().to_string();
        let posted = read_until(ws, &mut seen, |v| {
            event_is(v, "envelope") && v["kind"] == "encrypted-vote" && v["sender"] == *id
        });
        assert_eq!(posted["digest"], digest.as_str());
        if *id == 1 {
            // Panel 2 has not voted yet, so this node is parked in a later
            // phase and must refuse.
            let late = serde_json::json!({"command": "cast", "candidate": 0});
            ws.send(Message::text(late.to_string())).unwrap();
            let refused = read_until(ws, &mut seen, |v| event_is(v, "error"));
            assert_eq!(refused["reason"], "voting is closed for this panel");
        }
        logs.push((*id, seen));
    }
    for ((id, ws), (_, seen)) in panels.iter_mut().zip(logs.iter_mut()) {
        let verdict = read_until(ws, seen, |v| event_is(v, "verdict"));
        assert_eq!(verdict["ok"], *id != 1, "panel {id}: {verdict}");
        let result = read_until(ws, seen, |v| event_is(v, "result"));
        assert_eq!(result["status"], "halted");
        assert!(result["totals"].is_null());
        let votes = seen
            .iter()
            .filter(|v| event_is(v, "vote-cast"))
            .count();
        assert_eq!(votes, 1);
    }

    let d = d.join().unwrap();
    for h in handles {
        let r = h.join().unwrap();
        assert_eq!(r.result.as_ref().unwrap().status, ResultStatus::Halted);
    }
    let summary = relay.join().unwrap();
    let tallied = replay(&config, &summary.log).unwrap();
    assert_eq!(d.result.unwrap(), tallied);
    assert_eq!(tallied.allegations.len(), 1);
    assert_eq!(tallied.allegations[0].voter, PartyId(1));
}

#[test]
fn honest_panel_totals_match_replay() {
    let config = roster("live-ui-honest", 3);
    let relay = Relay::bind("127.0.0.1:0", config.clone(), None).unwrap();
    let addr = relay.local_addr().to_string();
    let relay = thread::spawn(move || relay.run().unwrap());
    let mut handles = Vec::new();
    for (id, c) in [(0u32, 0usize), (1, 2)] {
        let mut o = party(&config, id, &addr);
        o.choice = Some(c);
        handles.push(spawn(o));
    }
    let (lane, commands) = UiLane::bind("127.0.0.1:0").unwrap();
    let mut o = party(&config, 2, &addr);
    o.ui = Some((lane.clone(), commands));
    o.round_timeout = Duration::from_secs(30);
    handles.push(spawn(o));
    let mut ws = ws_connect(&lane);
    let mut seen = Vec::new();
    read_until(&mut ws, &mut seen, |v| event_is(v, "phase") && v["phase"] == "selecting");
    ws.send(Message::text(r#"{"command":"cast","candidate":2}"#)).unwrap();
    let verdict = read_until(&mut ws, &mut seen, |v| event_is(v, "verdict"));
    assert_eq!(verdict["ok"], true);
    let shown = read_until(&mut ws, &mut seen, |v| event_is(v, "result"));
    let audit = read_until(&mut ws, &mut seen, |v| event_is(v, "audit"));
    assert_eq!(audit["ok"], true);
    for h in handles {
        h.join().unwrap();
    }
    let tallied = replay(&config, &relay.join().unwrap().log).unwrap();
    assert_eq!(shown["formatted"], tallied.formatted_totals().unwrap().as_str());
    assert_eq!(tallied.formatted_totals().unwrap(), "ada: 1, bo: 0, cy: 2");
}

#[test]
fn silent_party_leads_to_abort() {
    let config = roster("live-abort", 3);
    let relay = Relay::bind("127.0.0.1:0", config.clone(), None).unwrap();
    let addr = relay.local_addr().to_string();
    let relay = thread::spawn(move || relay.run().unwrap());
    let mut handles = Vec::new();
    for id in 0..3u32 {
        let mut o = party(&config, id, &addr);
        o.choice = Some(0);
        if id == 2 {
            o.misbehavior = vec![Misbehavior::WithholdShare];
        }
        handles.push(spawn(o));
    }
    for h in handles {
        let r = h.join().unwrap();
        assert!(r.result.is_err());
    }
    let summary = relay.join().unwrap();
    let err = replay(&config, &summary.log).unwrap_err().to_string();
    assert!(err.contains("aborted in round 3"), "{err}");
}
