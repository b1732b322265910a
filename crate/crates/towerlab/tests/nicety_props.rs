use proptest::prelude::*;
use towerlab::nicety::{
    copylen_laws, extend_nice, is_nice, lex_compare, nicify, nicify_with, path_between, EnumTree,
    Materialize, NiceSegment, RawCnf,
};
use towerlab::notation::{compare, parse_notation, Notation};

fn n(s: &str) -> Notation {
    parse_notation(s).unwrap()
}

fn alpha() -> impl Strategy<Value = Notation> {
    (0u64..3, 0u64..3, 0u64..3, 0u64..4).prop_map(|(c3, c2, c1, c0)| {
        let text = format!("w^3*{c3}+w^2*{c2}+w*{c1}+{c0}");
        let terms: Vec<String> = text
            .split('+')
            .filter(|t| !t.ends_with("*0") && *t != "0")
            .map(|t| t.trim_end_matches("*1").to_string())
            .collect();
        if terms.is_empty() {
            n("0")
        } else {
            n(&terms.join("+"))
        }
    })
}

fn small(a: &Notation) -> NiceSegment {
    nicify_with(
        a,
        &Materialize {
            width: 5,
            max_nodes: 200,
        },
    )
    .unwrap()
}

// `(w*2)[0] = w+1`, so the raw system below `w^2` does reach `w+1`, and
// through a unique minimal path. The raw control of the niceness checks
// therefore has no witness at `w+1`.
#[test]
fn raw_omega_squared_reaches_omega_plus_one_through_omega_two() {
    let raw = RawCnf::for_alpha(&n("w^2"), &Materialize::default());
    let p = path_between(&raw, &n("w^2"), &n("w+1")).unwrap();
    assert_eq!(p.steps, vec![n("w^2"), n("w*2"), n("w+1")]);
    assert!(p.minimal);
    assert!(is_nice(&raw, 500).between_reachable.pass);
}

#[test]
fn extension_by_omega_stays_nice() {
    let w = nicify(&n("w")).unwrap();
    let ext = extend_nice(&w, &w);
    assert_eq!(ext.roots().len(), 2);
    assert_eq!(ext.base(*ext.ascending().last().unwrap()), &n("w*2"));
    assert!(ext.lookup(&n("w+1")).is_some());
    assert!(is_nice(&ext, 500).pass());
}

#[test]
fn omega_fundamental_sequence_is_the_naturals() {
    let seg = nicify(&n("w")).unwrap();
    let top = seg.top();
    let kids: Vec<Notation> = seg
        .node(top)
        .children
        .iter()
        .map(|&c| seg.base(c).clone())
        .collect();
    let want: Vec<Notation> = (0..kids.len() as u64).map(Notation::finite).collect();
    assert_eq!(kids, want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn order_agrees_with_addresses(a in alpha()) {
        let seg = small(&a);
        for i in 0..seg.len() {
            for j in 0..seg.len() {
                prop_assert_eq!(
                    compare(seg.base(i), seg.base(j)),
                    lex_compare(&seg.node(i).address, &seg.node(j).address)
                );
            }
        }
    }

    #[test]
    fn lazy_tree_reproduces_addresses(a in alpha()) {
        let seg = small(&a);
        let mut t = EnumTree::new(a.clone(), 1 << 14);
        for i in 0..seg.len() {
            prop_assert_eq!(&t.enumseq(seg.base(i)).unwrap(), &seg.node(i).address);
        }
    }

    #[test]
    fn segments_are_nice(a in alpha()) {
        let rep = is_nice(&small(&a), 200);
        prop_assert!(rep.pass(), "{:?}", rep);
    }

    #[test]
    fn copylen_recursion_and_between(a in alpha()) {
        let laws = copylen_laws(&small(&a));
        prop_assert!(laws.recursion.pass, "{:?}", laws.recursion);
        prop_assert!(laws.between.pass, "{:?}", laws.between);
    }

    #[test]
    fn enum_pred_is_the_parent_limit(a in alpha()) {
        let seg = small(&a);
        for i in 0..seg.len() {
            if let Some(p) = seg.enum_pred(i) {
                prop_assert!(seg.base(p).is_limit());
                prop_assert!(seg.node(p).children.contains(&i));
            }
        }
    }
}
