//! Cantor normal form notations for ordinals below epsilon-zero.
//!
//! A notation is a strictly decreasing list of terms `w^e * c`. Zero is the
//! empty list. Everything here is pure and cheap to clone.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotationError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("{0} is not a limit notation")]
    NotALimit(Notation),
}

/// One Cantor normal form summand `w^exponent * coeff`, with `coeff >= 1`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Term {
    pub exponent: Notation,
    pub coeff: u64,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Notation {
    terms: Vec<Term>,
}

/// Successor/limit classification. The predecessor is carried for successors.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Kind {
    Zero,
    Successor(Notation),
    Limit,
}

impl Notation {
    pub fn zero() -> Self {
        Notation { terms: Vec::new() }
    }

    pub fn finite(n: u64) -> Self {
        if n == 0 {
            return Self::zero();
        }
        Notation {
            terms: vec![Term {
                exponent: Self::zero(),
                coeff: n,
            }],
        }
    }

    pub fn one() -> Self {
        Self::finite(1)
    }

    pub fn omega() -> Self {
        Self::omega_pow(Self::one())
    }

    /// `w^e`.
    pub fn omega_pow(e: Notation) -> Self {
        Self::monomial(e, 1)
    }

    /// `w^e * c`; zero when `c == 0`.
    pub fn monomial(e: Notation, c: u64) -> Self {
        if c == 0 {
            return Self::zero();
        }
        Notation {
            terms: vec![Term {
                exponent: e,
                coeff: c,
            }],
        }
    }

    /// Builds a notation from terms, normalizing through ordinal addition.
    pub fn from_terms<I: IntoIterator<Item = Term>>(terms: I) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, t| {
            nat_sum(&acc, &Self::monomial(t.exponent, t.coeff))
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_finite(&self) -> Option<u64> {
        match self.terms.as_slice() {
            [] => Some(0),
            [t] if t.exponent.is_zero() => Some(t.coeff),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_finite().is_some()
    }

    pub fn succ(&self) -> Self {
        nat_sum(self, &Self::one())
    }

    /// Splits `self` into `delta + k` where `delta` is zero or a limit.
    pub fn split_finite(&self) -> (Notation, u64) {
        match self.terms.last() {
            Some(t) if t.exponent.is_zero() => {
                let delta = Notation {
                    terms: self.terms[..self.terms.len() - 1].to_vec(),
                };
                (delta, t.coeff)
            }
            _ => (self.clone(), 0),
        }
    }

    pub fn classify(&self) -> Kind {
        classify(self)
    }

    pub fn is_limit(&self) -> bool {
        matches!(self.classify(), Kind::Limit)
    }

    /// The `n`-th member of the fundamental sequence.
    pub fn fund(&self, n: u64) -> Result<Notation, NotationError> {
        fund_seq(self, n)
    }

    pub fn code(&self) -> u64 {
        code_of(self)
    }

    /// Number of nested exponent levels; `0` for finite notations.
    pub fn height(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| !t.exponent.is_zero())
            .map(|t| 1 + t.exponent.height())
            .max()
            .unwrap_or(0)
    }
}

pub fn compare(a: &Notation, b: &Notation) -> Ordering {
    for (x, y) in a.terms.iter().zip(&b.terms) {
        let o = compare(&x.exponent, &y.exponent).then(x.coeff.cmp(&y.coeff));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.terms.len().cmp(&b.terms.len())
}

impl Ord for Notation {
    fn cmp(&self, other: &Self) -> Ordering {
        compare(self, other)
    }
}

impl PartialOrd for Notation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ordinal sum `a + b`. Terms of `a` below the leading exponent of `b` are
/// absorbed.
pub fn nat_sum(a: &Notation, b: &Notation) -> Notation {
    let Some(lead) = b.terms.first() else {
        return a.clone();
    };
    let mut terms: Vec<Term> = Vec::with_capacity(a.terms.len() + b.terms.len());
    let mut carry = 0;
    for t in &a.terms {
        match compare(&t.exponent, &lead.exponent) {
            Ordering::Greater => terms.push(t.clone()),
            Ordering::Equal => carry = t.coeff,
            Ordering::Less => break,
        }
    }
    terms.push(Term {
        exponent: lead.exponent.clone(),
        coeff: lead.coeff + carry,
    });
    terms.extend(b.terms[1..].iter().cloned());
    Notation { terms }
}

pub fn classify(a: &Notation) -> Kind {
    match a.terms.last() {
        None => Kind::Zero,
        Some(t) if t.exponent.is_zero() => {
            let mut terms = a.terms.clone();
            let last = terms.last_mut().unwrap();
            if last.coeff == 1 {
                terms.pop();
            } else {
                last.coeff -= 1;
            }
            Kind::Successor(Notation { terms })
        }
        Some(_) => Kind::Limit,
    }
}

/// Fundamental sequences, indexed from zero:
/// `(d + w^(a+1))[n] = d + w^a * (n+1)` and `(d + w^m)[n] = d + w^(m[n])` for
/// limit `m`. A last coefficient `c > 1` is peeled off first.
pub fn fund_seq(lambda: &Notation, n: u64) -> Result<Notation, NotationError> {
    if !lambda.is_limit() {
        return Err(NotationError::NotALimit(lambda.clone()));
    }
    let mut delta = lambda.terms.clone();
    let last = delta.pop().unwrap();
    if last.coeff > 1 {
        delta.push(Term {
            exponent: last.exponent.clone(),
            coeff: last.coeff - 1,
        });
    }
    let delta = Notation { terms: delta };
    let tail = match classify(&last.exponent) {
        Kind::Successor(a) => Notation::monomial(a, n + 1),
        Kind::Limit => Notation::omega_pow(fund_seq(&last.exponent, n)?),
        Kind::Zero => unreachable!("limit notations have a nonzero last exponent"),
    };
    Ok(nat_sum(&delta, &tail))
}

/// Cantor pairing `(x+y)(x+y+1)/2 + y`; strictly increasing in both arguments.
pub fn cantor_pair(x: u64, y: u64) -> Option<u64> {
    let s = x.checked_add(y)?;
    let tri = if s % 2 == 0 {
        (s / 2).checked_mul(s.checked_add(1)?)?
    } else {
        s.checked_mul(s.checked_add(1)? / 2)?
    };
    tri.checked_add(y)
}

pub fn cantor_unpair(z: u64) -> (u64, u64) {
    // largest w with w(w+1)/2 <= z
    let mut w = (((8.0 * z as f64 + 1.0).sqrt() - 1.0) / 2.0) as u64;
    while w * (w + 1) / 2 > z {
        w -= 1;
    }
    while (w + 1) * (w + 2) / 2 <= z {
        w += 1;
    }
    let y = z - w * (w + 1) / 2;
    (w - y, y)
}

/// Canonical code: `code(0) = 0` and
/// `code(w^e*c + rest) = 1 + pair(pair(code(e), c-1), code(rest))`.
/// Returns `None` when the code does not fit in a `u64`.
pub fn try_code_of(a: &Notation) -> Option<u64> {
    fn go(terms: &[Term]) -> Option<u64> {
        let Some((head, rest)) = terms.split_first() else {
            return Some(0);
        };
        let e = go(&head.exponent.terms)?;
        let inner = cantor_pair(e, head.coeff - 1)?;
        cantor_pair(inner, go(rest)?)?.checked_add(1)
    }
    go(&a.terms)
}

/// See [`try_code_of`]. Panics if the code overflows `u64`, which only happens
/// for notations far larger than anything materialized at desk scale.
pub fn code_of(a: &Notation) -> u64 {
    try_code_of(a).unwrap_or_else(|| panic!("code of {a} overflows u64"))
}

/// Inverse of [`code_of`] on canonical notations; `None` for codes of
/// non-canonical term lists.
pub fn decode_code(n: u64) -> Option<Notation> {
    if n == 0 {
        return Some(Notation::zero());
    }
    let (inner, rest) = cantor_unpair(n - 1);
    let (e, c) = cantor_unpair(inner);
    let exponent = decode_code(e)?;
    let rest = decode_code(rest)?;
    if let Some(t) = rest.terms.first() {
        if compare(&t.exponent, &exponent) != Ordering::Less {
            return None;
        }
    }
    let mut terms = vec![Term {
        exponent,
        coeff: c.checked_add(1)?,
    }];
    terms.extend(rest.terms);
    Some(Notation { terms })
}

/// All canonical notations with code at most `max_code`, in code order.
pub fn notations_up_to_code(max_code: u64) -> Vec<Notation> {
    (0..=max_code).filter_map(decode_code).collect()
}

impl fmt::Display for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            match t.exponent.as_finite() {
                Some(0) => write!(f, "{}", t.coeff)?,
                Some(1) => write!(f, "w")?,
                Some(k) => write!(f, "w^{k}")?,
                None => write!(f, "w^({})", t.exponent)?,
            }
            if !t.exponent.is_zero() && t.coeff > 1 {
                write!(f, "*{}", t.coeff)?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, NotationError> {
        Err(NotationError::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_omega(&mut self) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if rest.first() == Some(&b'w') {
            self.pos += 1;
            true
        } else if rest.starts_with("ω".as_bytes()) {
            self.pos += "ω".len();
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<u64, NotationError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse().or_else(|_| self.err("number too large"))
    }

    fn expr(&mut self) -> Result<Notation, NotationError> {
        let mut acc = self.term()?;
        while self.eat(b'+') {
            let t = self.term()?;
            acc = nat_sum(&acc, &t);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Notation, NotationError> {
        if self.eat_omega() {
            let exponent = if self.eat(b'^') {
                self.exponent()?
            } else {
                Notation::one()
            };
            let coeff = if self.eat(b'*') { self.number()? } else { 1 };
            Ok(Notation::monomial(exponent, coeff))
        } else if self.eat(b'(') {
            let inner = self.expr()?;
            if !self.eat(b')') {
                return self.err("expected ')'");
            }
            Ok(inner)
        } else {
            Ok(Notation::finite(self.number()?))
        }
    }

    fn exponent(&mut self) -> Result<Notation, NotationError> {
        if self.eat(b'(') {
            let inner = self.expr()?;
            if !self.eat(b')') {
                return self.err("expected ')'");
            }
            Ok(inner)
        } else if self.eat_omega() {
            Ok(Notation::omega())
        } else {
            Ok(Notation::finite(self.number()?))
        }
    }
}

/// Parses the grammar `0 | n | w | w^E | w^E*c | T+T` with parenthesized
/// exponents. Non-canonical sums such as `w+w` are normalized.
pub fn parse_notation(text: &str) -> Result<Notation, NotationError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let n = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("trailing input");
    }
    Ok(n)
}

impl FromStr for Notation {
    type Err = NotationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_notation(s)
    }
}

impl Serialize for Notation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Notation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_notation(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Notation {
        parse_notation(s).unwrap()
    }

    #[test]
    fn parses_spec_shapes() {
        assert!(n("0").is_zero());
        let a = n("w^2+w*3+5");
        let shape: Vec<(Option<u64>, u64)> = a
            .terms()
            .iter()
            .map(|t| (t.exponent.as_finite(), t.coeff))
            .collect();
        assert_eq!(shape, vec![(Some(2), 1), (Some(1), 3), (Some(0), 5)]);
        assert_eq!(n("w+w"), Notation::monomial(Notation::one(), 2));
        assert_eq!(n("w^(w)+w*2+3").to_string(), "w^(w)+w*2+3");
        assert_eq!(n("ω^ω"), n("w^w"));
        assert!(parse_notation("w^").is_err());
        assert!(parse_notation("w+").is_err());
        assert!(parse_notation("3 4").is_err());
    }

    #[test]
    fn order_and_sum() {
        assert_eq!(compare(&n("w+1"), &n("w*2")), Ordering::Less);
        assert_eq!(compare(&n("w^w"), &n("w^3*9")), Ordering::Greater);
        assert_eq!(nat_sum(&n("3"), &n("5")), n("8"));
        assert_eq!(nat_sum(&n("w*2+3"), &n("w")), n("w*3"));
        assert_eq!(nat_sum(&n("w"), &n("1")), n("w+1"));
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&n("0")), Kind::Zero);
        assert_eq!(classify(&n("w^2+1")), Kind::Successor(n("w^2")));
        assert_eq!(classify(&n("w*5")), Kind::Limit);
    }

    #[test]
    fn fundamental_sequences() {
        assert_eq!(fund_seq(&n("w"), 3).unwrap(), n("4"));
        assert_eq!(fund_seq(&n("w^2"), 2).unwrap(), n("w*3"));
        assert_eq!(fund_seq(&n("w^w"), 1).unwrap(), n("w^2"));
        assert_eq!(fund_seq(&n("w*2"), 0).unwrap(), n("w+1"));
        assert_eq!(fund_seq(&n("w^2*2"), 1).unwrap(), n("w^2+w*2"));
        assert!(matches!(
            fund_seq(&n("5"), 0),
            Err(NotationError::NotALimit(_))
        ));
        assert!(matches!(
            fund_seq(&n("0"), 0),
            Err(NotationError::NotALimit(_))
        ));
    }

    #[test]
    fn codes_round_trip() {
        assert_eq!(code_of(&Notation::zero()), 0);
        for a in notations_up_to_code(2000) {
            assert_eq!(decode_code(code_of(&a)), Some(a));
        }
        assert_ne!(code_of(&n("w")), code_of(&n("w+1")));
    }
}
