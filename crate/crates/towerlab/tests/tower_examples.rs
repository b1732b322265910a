use std::collections::BTreeMap;
use std::sync::Arc;

use towerlab::hierarchy::FiniteFunction;
use towerlab::machine::{run_program, Program, RunOutcome};
use towerlab::nicety::nicify;
use towerlab::notation::{cantor_unpair, parse_notation, Notation};
use towerlab::tower::{
    audit_tower, build_independent_family, build_tower, extract_root, preimage_bound, treemap,
    BuildConfig, ExclusionSpec, FamilyConfig, Level, LevelBuild, LevelSpec, MonotoneMap, OpenSpec,
    Tower,
};
use towerlab::trees::{FingerString, LevelTree};

fn plain_tower(alpha: &str, depth: usize, stages: u64) -> Tower {
    let seg = Arc::new(nicify(&parse_notation(alpha).unwrap()).unwrap());
    let cfg = BuildConfig {
        stages,
        depth,
        ..Default::default()
    };
    build_tower(
        seg,
        &LevelTree::full_binary(depth),
        &|_| LevelSpec::default(),
        &cfg,
    )
    .unwrap()
}

#[test]
fn limit_level_is_copied_below_copylen() {
    let tw = plain_tower("w", 6, 200);
    let omega = tw.node_of(&Notation::omega()).unwrap();
    let mut seen = 0;
    for k in 0..8u64 {
        let Ok(id) = tw.node_of(&Notation::finite(k)) else {
            continue;
        };
        let c = tw.segment.copylen(id) as usize;
        assert_eq!(c, k as usize);
        assert_eq!(
            tw.level(id).tree().restrict(c),
            tw.level(omega).tree().restrict(c),
            "level {k}"
        );
        seen += 1;
    }
    assert!(seen >= 6);
    assert!(audit_tower(&tw).pass());
}

#[test]
fn composite_maps_compose_one_steps() {
    let tw = plain_tower("3", 4, 120);
    let asc = tw.segment.ascending().to_vec();
    for (i, &from) in asc.iter().enumerate() {
        for &to in &asc[..i] {
            for sigma in tw.level(from).tree().nodes() {
                let mut cur = Some(sigma.clone());
                let mut at = from;
                while at != to {
                    let below = tw.below(at).unwrap();
                    cur = cur.and_then(|s| tw.level(below).theta().get(&s).cloned());
                    at = below;
                }
                assert_eq!(treemap(&tw, from, to, sigma).ok(), cur);
            }
        }
    }
}

#[test]
fn extract_root_is_the_composite_image() {
    let tw = plain_tower("2", 4, 120);
    for sigma in tw.level(tw.top()).tree().nodes() {
        let mut img = sigma.clone();
        for lvl in tw.descending().skip(1) {
            img = lvl.theta().get(&img).unwrap().clone();
        }
        let got = extract_root(&tw, &FiniteFunction(sigma.0.clone()), 64).unwrap();
        assert_eq!(got.0, img.0);
        let short = extract_root(&tw, &FiniteFunction(sigma.0.clone()), 2).unwrap();
        assert_eq!(short.0, img.prefix(2).0);
    }
}

/// Two copies of one tree joined by the identity map.
fn identity_tower(depth: usize) -> Tower {
    let seg = Arc::new(nicify(&Notation::one()).unwrap());
    let t = LevelTree::full(3, depth);
    let (top, bottom) = (seg.top(), seg.ascending()[0]);
    let identity: BTreeMap<FingerString, FingerString> =
        t.nodes().iter().map(|s| (s.clone(), s.clone())).collect();
    let mut levels = BTreeMap::new();
    let level = |node, above, build| Level {
        node,
        notation: seg.base(node).clone(),
        above,
        pred: None,
        copylen: 0,
        build,
        spec: LevelSpec::default(),
    };
    levels.insert(top, level(top, None, LevelBuild::fixed(t.clone())));
    let mut below = LevelBuild::fixed(t);
    below.theta = MonotoneMap {
        final_map: identity,
        ..Default::default()
    };
    levels.insert(bottom, level(bottom, Some(top), below));
    Tower {
        segment: seg,
        levels,
        config: BuildConfig {
            depth,
            ..Default::default()
        },
    }
}

#[test]
fn zero_bound_on_the_identity_tower_follows_the_zero_branch() {
    let tw = identity_tower(5);
    let h = FiniteFunction(vec![0; 32]);
    for n in 0..=5 {
        assert_eq!(preimage_bound(&tw, tw.top(), &h, n).unwrap(), n);
    }
}

#[test]
fn large_bound_gives_the_longest_image() {
    let tw = plain_tower("1", 5, 150);
    let top = tw.top();
    let h = FiniteFunction(vec![1 << 40; 4096]);
    for n in 0..=5 {
        let brute = tw
            .level(top)
            .tree()
            .nodes()
            .iter()
            .filter(|s| s.len() <= n)
            .filter_map(|s| treemap(&tw, top, tw.bottom(), s).ok())
            .map(|img| img.len())
            .max()
            .unwrap();
        assert_eq!(preimage_bound(&tw, top, &h, n).unwrap(), brute, "n={n}");
    }
}

#[test]
fn one_requirement_is_certified_by_direct_evaluation() {
    let specs: Vec<&dyn ExclusionSpec> = vec![&OpenSpec, &OpenSpec];
    let cfg = FamilyConfig {
        requirements: 1,
        ..Default::default()
    };
    let (funcs, log) = build_independent_family(2, &specs, &cfg).unwrap();
    assert_eq!(log.met, 1);
    let rec = &log.requirements[0];
    assert_eq!((rec.function, rec.program), (0, 0));
    let c = rec.certificate.as_ref().unwrap();

    // Program 0 against function 1: query y = pair(0, pair(pos, v)) asks
    // whether g_1(pos) = v.
    let g1 = &funcs[1];
    let oracle = |y: u64| {
        let (a, rest) = cantor_unpair(y);
        let (pos, v) = cantor_unpair(rest);
        a == 0 && g1.get(pos as usize) == Some(v)
    };
    let out = run_program(
        &Program::from_index(0),
        &oracle,
        c.witness as u64,
        cfg.step_budget,
    );
    let RunOutcome::Halted { output, .. } = out else {
        panic!("certificate no longer halts")
    };
    assert_eq!(output, c.output);
    assert_ne!(output, funcs[0].0[c.witness]);
}
