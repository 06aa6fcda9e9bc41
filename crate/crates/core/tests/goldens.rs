//! Seeded outputs recorded from the first run. A change here means the
//! randomness plumbing or an encoding changed, which breaks old logs.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use boardroom::commitment::verify_commitment;
use boardroom::group::GroupParams;
use boardroom::ot::OtnSender;
use boardroom::protocol::{DistributorSetup, ElectionConfig, PartySeed};
use boardroom::PartyId;

#[test]
fn seeded_ot_offer() {
    let p = GroupParams::toy64();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let strings: Vec<Vec<u8>> = (0..9u8).map(|i| vec![i; 8]).collect();
    let (_, offer) = OtnSender::new(&p, 5, strings, &mut rng).unwrap();
    let got: Vec<(u64, String)> = offer.setups.iter().map(|s| (s.instance, s.c.to_hex())).collect();
    let want = [
        (1280, "080f589b493d7212"),
        (1281, "ac9b8dc26e445e3b"),
        (1282, "bdc2be55d3b1923a"),
        (1283, "63b7566cc2a7160b"),
    ];
    assert_eq!(got.len(), want.len());
    for ((gi, gc), (wi, wc)) in got.iter().zip(want) {
        assert_eq!((*gi, gc.as_str()), (wi, wc));
    }
}

#[test]
fn seeded_distributor_setup() {
    let config = ElectionConfig::new("golden", 4, &["A", "B", "C"], 3);
    let setup = DistributorSetup::derive(&config, &PartySeed::from_master(2024, PartyId(0))).unwrap();
    assert_eq!(
        setup.assignment_commitment.to_hex(),
        "a6544c7299949629a8c8333517c5e772ef4594305aa60697a6b7492457b86572"
    );
    assert_eq!(
        setup.mask_commitment.to_hex(),
        "dca5877161160d766433c0c381311e2407f527305d90d5e085939aa85048b0b7"
    );
    assert_eq!(setup.assignment.primes(), &[13, 19, 5, 2, 11, 23, 17, 3, 7]);
    assert_eq!(setup.mask.element().to_hex(), "cfb25b2652ad0206");
    assert!(verify_commitment(&setup.assignment_commitment, &setup.assignment_opening));
    assert!(verify_commitment(&setup.mask_commitment, &setup.mask_opening));
}
