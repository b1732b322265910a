use std::sync::Arc;

use proptest::prelude::*;
use towerlab::hierarchy::{
    koenig_extract, mock_family, FiniteFunction, MockFamilyConfig, ModulusHierarchy,
};
use towerlab::machine::{mock_oracle, settle_time, simulated_oracle, JumpMachine, SettleSpec};
use towerlab::nicety::nicify;
use towerlab::notation::{code_of, compare, parse_notation, Notation};

fn mock_hierarchy(alpha: &str, seed: u64, probe: u64) -> ModulusHierarchy {
    let seg = Arc::new(nicify(&parse_notation(alpha).unwrap()).unwrap());
    let cfg = MockFamilyConfig {
        seed,
        ..Default::default()
    };
    ModulusHierarchy::new(Arc::clone(&seg), mock_family(&seg, &cfg), probe)
}

#[test]
fn koenig_recovers_mock_xi_from_a_pointwise_larger_bound() {
    let h = mock_hierarchy("2", 7, 400);
    let one = Notation::one();
    let xi = h.xi_prefix(&one, 12).unwrap();
    let bound = FiniteFunction(xi.values().iter().map(|v| v + 1).collect());
    let tree_of = |s: &[u64]| s.iter().enumerate().all(|(x, &v)| xi.0[x] == v);
    assert_eq!(koenig_extract(&bound, &tree_of, 8).unwrap(), xi.prefix(8));
}

#[test]
fn settle_time_reads_back_a_mock() {
    let o = mock_oracle(SettleSpec::new(0, [(0, 3), (2, 7)]), 1);
    assert_eq!(settle_time(&o, 2, 50).unwrap(), Some(7));
    assert_eq!(settle_time(&o, 0, 50).unwrap(), Some(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_jump_approximations_only_grow(y in 0u64..40, s in 0u64..150) {
        let m = JumpMachine::new(1, 200);
        if m.member(1, s, y).unwrap() {
            prop_assert!(m.member(1, s + 1, y).unwrap());
        }
    }

    #[test]
    fn settle_estimates_stay_below_the_stage(i in 0u64..30, s in 0u64..120) {
        let o = simulated_oracle(Arc::new(JumpMachine::new(2, 200)), 1);
        prop_assert!(o.settle_estimate(i, s).unwrap() <= s);
    }

    #[test]
    fn mock_hierarchy_laws(seed in 0u64..1000) {
        let h = mock_hierarchy("w+2", seed, 200);
        let seg = h.segment();
        for x in 0..12 {
            prop_assert_eq!(h.xi(&Notation::zero(), x).unwrap(), 0);
        }
        for &id in seg.ascending() {
            let b = seg.base(id);
            let up = b.succ();
            if seg.lookup(&up).is_none() {
                continue;
            }
            for x in 0..code_of(&up).min(40) {
                prop_assert_eq!(h.xi(&up, x).unwrap(), h.xi(b, x).unwrap(), "{} at {}", up, x);
            }
            for x in 0..8 {
                let vals: Vec<u64> = (0..=200).map(|s| h.xi_approx(b, x, s).unwrap()).collect();
                prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(*vals.last().unwrap(), h.xi(b, x).unwrap());
            }
        }
    }

    #[test]
    fn mock_hierarchy_grows_with_the_level(seed in 0u64..1000, x in 0u64..24) {
        let h = mock_hierarchy("w+2", seed, 200);
        let seg = h.segment();
        let ids = seg.ascending();
        for (k, &g) in ids.iter().enumerate() {
            for &b in &ids[k + 1..] {
                prop_assert!(compare(seg.base(g), seg.base(b)).is_lt());
                prop_assert!(h.xi_node(g, x).unwrap() <= h.xi_node(b, x).unwrap());
            }
        }
    }
}
