//! Statistical smoke tests: what the distributor sees should not depend on
//! the voter's choice. Seeds are fixed, so these never flake.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use boardroom::group::GroupParams;
use boardroom::ot::{OtChoice, OtnReceiver, OtnSender};
use boardroom::protocol::{planned_index, ElectionConfig, PartySeed};
use boardroom::PartyId;

const BUCKETS: usize = 8;

/// Two-sample chi-square homogeneity statistic over equal-size samples.
fn chi_square_two(a: &[u64; BUCKETS], b: &[u64; BUCKETS]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d / (x + y) as f64
        })
        .sum()
}

/// Buckets of the receiver's first-level key, as the distributor sees it.
fn select_profile(choice: usize, seed: u64) -> [u64; BUCKETS] {
    let p = GroupParams::toy64();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let strings: Vec<Vec<u8>> = (0..16u8).map(|i| vec![i; 4]).collect();
    let mut counts = [0u64; BUCKETS];
    for session in 0..2000 {
        let (_, offer) = OtnSender::new(&p, session, strings.clone(), &mut rng).unwrap();
        let mut receiver = OtnReceiver::new(&p, OtChoice::new(choice, 16).unwrap());
        let select = receiver.on_offer(&offer, &mut rng).unwrap();
        let low = select.keys[0].pk0.to_u64().unwrap() as usize;
        counts[low % BUCKETS] += 1;
    }
    counts
}

#[test]
fn ot_selection_is_independent_of_choice() {
    // Index 0 and index 15 differ in every key-tree bit.
    let low = select_profile(0, 1);
    let high = select_profile(15, 2);
    let stat = chi_square_two(&low, &high);
    // Critical value for 7 degrees of freedom at p = 0.001.
    assert!(stat < 24.32, "chi-square {stat:.2}: {low:?} vs {high:?}");
}

#[test]
fn index_within_block_is_uniform() {
    let config = ElectionConfig::new("secrecy", 4, &["A", "B", "C"], 3);
    let mut counts = [0u64; 3];
    let trials = 3000u64;
    for s in 0..trials {
        let idx = planned_index(&config, &PartySeed::from_master(s, PartyId(1)), 1).unwrap();
        assert!((3..6).contains(&idx), "index {idx} outside candidate 1's block");
        counts[idx - 3] += 1;
    }
    let expected = trials as f64 / 3.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Two degrees of freedom at p = 0.001.
    assert!(stat < 13.82, "chi-square {stat:.2}: {counts:?}");
}
