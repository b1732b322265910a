use std::sync::Arc;

use proptest::prelude::*;
use towerlab::formulas::{
    holds, rank, regression_suite, super_force, translate, Class, Formula, OracleSet, Side,
    SuperForce, Truth,
};
use towerlab::machine::{mock_oracle, SettleSpec};
use towerlab::nicety::nicify;
use towerlab::notation::Notation;
use towerlab::tower::{build_tower, BuildConfig, LevelSpec, Tower};
use towerlab::trees::{FingerString, LevelTree};

fn small_tower() -> Tower {
    let seg = Arc::new(nicify(&Notation::finite(2)).unwrap());
    let cfg = BuildConfig {
        stages: 60,
        depth: 3,
        ..Default::default()
    };
    build_tower(
        seg,
        &LevelTree::full_binary(3),
        &|_| LevelSpec::default(),
        &cfg,
    )
    .unwrap()
}

#[test]
fn translation_cases() {
    let tw = small_tower();
    let suite = regression_suite();
    for f in &suite {
        assert_eq!(
            &translate(f, &Notation::zero(), &tw, Side::Direct).unwrap(),
            f
        );
    }

    let sigma1 = Formula::exists(Formula::value(0, 0));
    assert_eq!(
        translate(&sigma1, &Notation::one(), &tw, Side::Direct).unwrap(),
        Formula::exists(Formula::forced(
            Notation::zero(),
            Side::Direct,
            sigma1.clone()
        ))
    );

    let sigma3 = suite
        .iter()
        .find(|f| rank(f).class == Class::Sigma && rank(f).level == 3)
        .unwrap();
    let negated = Formula::not(sigma3.clone());
    assert_eq!(
        translate(&negated, &Notation::one(), &tw, Side::Direct).unwrap(),
        Formula::not(translate(sigma3, &Notation::one(), &tw, Side::Direct).unwrap())
    );
}

fn oracles(settle1: Vec<(u64, u64)>, settle2: Vec<(u64, u64)>, budget: u64) -> OracleSet {
    OracleSet::new(
        [
            mock_oracle(SettleSpec::new(0, settle1), 1),
            mock_oracle(SettleSpec::new(1, settle2), 2),
        ],
        budget,
    )
}

fn settles() -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec((0u64..12, 1u64..40), 0..8)
}

fn decided(t: Truth) -> bool {
    t != Truth::Unknown
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holds_never_reverts(
        s1 in settles(),
        s2 in settles(),
        b1 in 0u64..40,
        extra in 0u64..40,
        path in prop::collection::vec(0u64..3, 0..5),
        tail in prop::collection::vec(0u64..3, 0..3),
    ) {
        let early = oracles(s1.clone(), s2.clone(), b1);
        let late = oracles(s1, s2, b1 + extra);
        let mut longer = path.clone();
        longer.extend(&tail);
        for f in regression_suite() {
            let t = holds(&f, &path, &early);
            if decided(t) {
                prop_assert_eq!(holds(&f, &path, &late), t, "budget: {}", f);
                prop_assert_eq!(holds(&f, &longer, &early), t, "path: {}", f);
            }
        }
    }

    #[test]
    fn strong_forcing_passes_to_extensions(
        strings in prop::collection::vec(prop::collection::vec(0u64..3, 3), 1..8),
        s1 in settles(),
        budget in 0u64..40,
    ) {
        let t = LevelTree::new(strings.into_iter().map(FingerString), 3);
        let o = oracles(s1, vec![], budget);
        let sigma1: Vec<Formula> =
            regression_suite().into_iter().filter(|f| rank(f).class == Class::Sigma && rank(f).level <= 1).collect();
        for psi in &sigma1 {
            for sigma in t.nodes() {
                if super_force(&t, sigma, psi, &o) == SuperForce::Forces {
                    for tau in t.extensions(sigma) {
                        prop_assert_eq!(super_force(&t, tau, psi, &o), SuperForce::Forces);
                    }
                }
            }
        }
    }
}
