use boardroom_wasm::{collusion_demo, ot_demo, run_collusion, run_election, run_ot, simulate_election};

#[test]
fn election_export_tallies() {
    let doc = run_election(4, "ada,bo,cy", 3, "1,2,1,0", 7, "");
    assert_eq!(doc["result"]["totals"], serde_json::json!([1, 2, 1]));
    assert_eq!(doc["formatted"], "ada: 1, bo: 2, cy: 1");
    let flagged = run_election(4, "ada,bo,cy", 3, "random", 7, "negative-vote:1");
    assert_eq!(flagged["result"]["status"], "flagged");
    assert!(flagged["result"]["anomaly"].is_object());
    let text = simulate_election(3, "x,y", 2, "0,1", 1, "");
    assert!(text.starts_with('{'));
}

#[test]
fn bad_input_becomes_an_error_document() {
    assert!(run_election(4, "a,b", 3, "0,1", 1, "")["error"].is_string());
    assert!(run_election(2, "a,b", 3, "0,5", 1, "")["error"].is_string());
    assert!(run_election(2, "a,b", 3, "0,1", 1, "teleport")["error"].is_string());
    assert!(run_ot(9, 9, 1)["error"].is_string());
    assert!(run_collusion(1, 0, 40)["error"].is_string());
}

#[test]
fn ot_export_opens_only_the_choice() {
    let doc = run_ot(9, 4, 3);
    assert_eq!(doc["received"], "secret #04");
    assert_eq!(doc["levels"], 4);
    let blobs = doc["blobs"].as_array().unwrap();
    for b in blobs {
        assert_eq!(b["opens"], b["index"] == 4);
    }
    assert!(ot_demo(2, 1, 1).contains("secret #01"));
}

#[test]
fn collusion_export_recovers_the_mask() {
    let doc = run_collusion(5, 0, 7);
    assert_eq!(doc["recovered"]["matches"], true);
    // Unmasking the whole list yields the table primes.
    let mut primes: Vec<u64> = doc["recovered"]["unmasked_list"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    primes.sort();
    assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23]);
    assert!(run_collusion(5, 3, 3)["failure"].is_string());
    assert!(collusion_demo(5, 1, 2).contains("\"matches\":true"));
}
