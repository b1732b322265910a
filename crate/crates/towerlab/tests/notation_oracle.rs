//! Notations below `w^4` checked against coefficient vectors: `c[k]` is the
//! coefficient of `w^k`, and ordinals compare from the highest power down.

use std::cmp::Ordering;

use proptest::prelude::*;
use towerlab::notation::{
    code_of, compare, decode_code, fund_seq, nat_sum, parse_notation, Kind, Notation,
};

type Coeffs = [u64; 4];

fn to_text(c: &Coeffs) -> String {
    let mut parts = Vec::new();
    for k in (0..4).rev() {
        let v = c[k];
        if v == 0 {
            continue;
        }
        parts.push(match (k, v) {
            (0, v) => v.to_string(),
            (1, 1) => "w".to_string(),
            (1, v) => format!("w*{v}"),
            (k, 1) => format!("w^{k}"),
            (k, v) => format!("w^{k}*{v}"),
        });
    }
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join("+")
    }
}

fn notation(c: &Coeffs) -> Notation {
    parse_notation(&to_text(c)).expect("generated text parses")
}

fn oracle_cmp(a: &Coeffs, b: &Coeffs) -> Ordering {
    (0..4)
        .rev()
        .map(|k| a[k].cmp(&b[k]))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn coeffs() -> impl Strategy<Value = Coeffs> {
    prop::array::uniform4(prop_oneof![3 => Just(0u64), 2 => 1u64..4])
}

fn pair(x: u64, y: u64) -> u64 {
    (x + y) * (x + y + 1) / 2 + y
}

#[test]
fn code_of_omega_follows_the_pairing_encoding() {
    // code(w^1*1 + 0) = 1 + pair(pair(code(1), 0), 0) with code(1) = 1.
    let code_one = 1 + pair(pair(0, 0), 0);
    assert_eq!(code_of(&Notation::one()), code_one);
    assert_eq!(code_of(&Notation::omega()), 1 + pair(pair(code_one, 0), 0));
    assert_eq!(code_of(&Notation::omega()), 2);
}

proptest! {
    #[test]
    fn order_matches_coefficients(a in coeffs(), b in coeffs()) {
        prop_assert_eq!(compare(&notation(&a), &notation(&b)), oracle_cmp(&a, &b));
    }

    #[test]
    fn text_round_trips(a in coeffs()) {
        let n = notation(&a);
        prop_assert_eq!(n.to_string(), to_text(&a));
        prop_assert_eq!(parse_notation(&n.to_string()).unwrap(), n);
    }

    #[test]
    fn sum_absorbs_lower_terms(a in coeffs(), b in coeffs()) {
        let want: Coeffs = match (0..4).rev().find(|&k| b[k] > 0) {
            None => a,
            Some(m) => std::array::from_fn(|k| match k.cmp(&m) {
                Ordering::Greater => a[k],
                Ordering::Equal => a[k] + b[k],
                Ordering::Less => b[k],
            }),
        };
        prop_assert_eq!(nat_sum(&notation(&a), &notation(&b)), notation(&want));
    }

    #[test]
    fn sum_is_associative_and_right_monotone(a in coeffs(), b in coeffs(), c in coeffs()) {
        let (a, b, c) = (notation(&a), notation(&b), notation(&c));
        prop_assert_eq!(nat_sum(&nat_sum(&a, &b), &c), nat_sum(&a, &nat_sum(&b, &c)));
        prop_assert_eq!(nat_sum(&a, &Notation::zero()), a.clone());
        if compare(&b, &c).is_lt() {
            prop_assert!(compare(&nat_sum(&a, &b), &nat_sum(&a, &c)).is_lt());
        }
    }

    #[test]
    fn classification_matches(a in coeffs()) {
        let n = notation(&a);
        let want = if a == [0; 4] {
            Kind::Zero
        } else if a[0] > 0 {
            let mut p = a;
            p[0] -= 1;
            Kind::Successor(notation(&p))
        } else {
            Kind::Limit
        };
        prop_assert_eq!(n.classify(), want);
    }

    #[test]
    fn fundamental_sequences_follow_the_lowest_power(a in coeffs(), n in 0u64..20) {
        prop_assume!(a[0] == 0 && a != [0; 4]);
        let k = (1..4).find(|&k| a[k] > 0).unwrap();
        let mut want = a;
        want[k] -= 1;
        want[k - 1] += n + 1;
        let lambda = notation(&a);
        let got = fund_seq(&lambda, n).unwrap();
        prop_assert_eq!(&got, &notation(&want));
        prop_assert_eq!(compare(&got, &lambda), Ordering::Less);
        prop_assert_eq!(compare(&got, &fund_seq(&lambda, n + 1).unwrap()), Ordering::Less);
    }

    #[test]
    fn codes_decode(a in coeffs()) {
        let n = notation(&a);
        prop_assert_eq!(decode_code(code_of(&n)), Some(n));
    }
}
