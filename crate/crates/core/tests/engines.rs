use boxpromo_core::log::{Action, LogHeader};
use boxpromo_core::verifier::{audit, Classification};
use boxpromo_core::run::run;
use boxpromo_core::scenario::{AdversaryConfig, PolicyKind, Scenario};

fn mp(policy: PolicyKind, c: u32, e_max: u32, horizon: u64, seed: u64) -> Scenario {
    Scenario::mp("t", c, e_max, horizon, AdversaryConfig::new(policy, seed))
}

/// Hand simulation of one follower's levels: sides 0 and 1 start at `e`,
/// side 1 is on top, and every permission moves the top side.
fn chain_oracle(c: u32, e: u32) -> u32 {
    let (mut k0, mut k1, mut top, mut has_one, mut moves) = (e, e, 1, true, 0);
    loop {
        moves += 1;
        if !has_one {
            return moves;
        }
        if top == 1 && k1 == c {
            has_one = false;
            top = 0;
        } else if top == 1 {
            k1 -= 1;
            top = 0;
        } else {
            k0 -= 1;
            top = 1;
        }
        let _ = k0;
    }
}

#[test]
fn permissive_chain_length() {
    for e in 1..=4u32 {
        let mut s = mp(PolicyKind::Permissive, 1, e, 400, 0);
        s.requirements = Some(vec![e]);
        let (recs, summary) = run(&s).unwrap();
        assert!(summary.violation.is_none());
        let winner = recs
            .iter()
            .find_map(|r| match r.action {
                Some(Action::Promote { follower, case: 1, .. }) => Some(follower),
                _ => None,
            })
            .expect("some follower enters E");
        let moves = recs
            .iter()
            .filter(|r| matches!(r.action, Some(Action::Promote { follower, .. }) if follower == winner))
            .count() as u32;
        assert_eq!(moves, chain_oracle(1, e), "e={e}");
        assert_eq!(moves, 2 * (e - 1) + 2, "e={e}");
    }
}

#[test]
fn every_policy_audits_clean() {
    let policies = [PolicyKind::Permissive, PolicyKind::Stonewall, PolicyKind::SeeSaw, PolicyKind::Random];
    let mut scenarios = Vec::new();
    for policy in policies {
        for c in 1..=2 {
            scenarios.push(mp(policy, c, c + 3, 1500, 7));
        }
        for depth in [2, 4, 6] {
            scenarios.push(Scenario::tree("t", depth, 1500, AdversaryConfig::new(policy, 3)));
        }
    }
    for s in scenarios {
        let (recs, summary) = run(&s).unwrap();
        assert!(summary.violation.is_none(), "{s:?}");
        let report = audit(&LogHeader::new(s.clone()), recs.iter()).unwrap();
        assert_eq!(report.failures(), 0, "{:?}", report.findings);
        if s.adversary.policy != PolicyKind::Stonewall {
            assert_eq!(report.classification, Classification::CompliantAtHorizon, "{s:?}");
        }
    }
}

proptest::proptest! {
    #![proptest_config(proptest::test_runner::Config::with_cases(24))]

    #[test]
    fn random_seeds_audit_clean(seed in 0u64..1_000_000, c in 1u32..3, tree in proptest::bool::ANY, depth in 1u32..5) {
        let s = if tree {
            Scenario::tree("p", depth, 600, AdversaryConfig::new(PolicyKind::Random, seed))
        } else {
            mp(PolicyKind::Random, c, c + 2, 600, seed)
        };
        let (recs, summary) = run(&s).unwrap();
        proptest::prop_assert!(summary.violation.is_none());
        let report = audit(&LogHeader::new(s.clone()), recs.iter()).unwrap();
        proptest::prop_assert_eq!(report.failures(), 0, "{:?}", report.findings);
    }
}
