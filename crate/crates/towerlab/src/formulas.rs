//! Computable infinitary formulas about a path `g`, their syntactic rank,
//! the level-by-level translation along a tower, and bounded forcing.
//!
//! Text format, one s-expression per formula:
//!
//! ```text
//! (val P V)            g(P) = V
//! (orc K I)            I is in the K-th jump
//! (not F)
//! (or F ...)           materialized disjunction; `or*` marks it unfinished
//! (ex F)               some prefix of g satisfies F
//! (forced B SIDE F)    the image of the current prefix at level B forces F;
//!                      SIDE is `direct` or `flipped`
//! ```
//!
//! Levels are notations; quote them when they contain parentheses, as in
//! `(forced "w^(w+1)" direct (val 0 0))`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{OracleApproximation, OracleKind};
use crate::nicety::{NodeId, NodeKind};
use crate::notation::Notation;
use crate::tower::{treemap, Tower};
use crate::trees::{FingerString, LevelTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("{0} is outside the segment")]
    OutOfSegment(Notation),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// The image forces the inner formula.
    Direct,
    /// For an inner negation `not F`: the image does not force `F`.
    Flipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Atom {
    Value { position: usize, value: u64 },
    Oracle { level: u32, index: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    OrStream {
        members: Vec<Formula>,
        exhausted: bool,
    },
    ExistsPrefix(Box<Formula>),
    ForcedAt {
        level: Notation,
        side: Side,
        inner: Box<Formula>,
    },
}

impl Formula {
    pub fn value(position: usize, value: u64) -> Self {
        Formula::Atom(Atom::Value { position, value })
    }

    pub fn oracle(level: u32, index: u64) -> Self {
        Formula::Atom(Atom::Oracle { level, index })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn or(members: Vec<Formula>) -> Self {
        Formula::OrStream {
            members,
            exhausted: true,
        }
    }

    pub fn exists(f: Formula) -> Self {
        Formula::ExistsPrefix(Box::new(f))
    }

    pub fn forced(level: Notation, side: Side, inner: Formula) -> Self {
        Formula::ForcedAt {
            level,
            side,
            inner: Box::new(inner),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::ExistsPrefix(f) => 1 + f.size(),
            Formula::ForcedAt { inner, .. } => 1 + inner.size(),
            Formula::OrStream { members, .. } => {
                1 + members.iter().map(Formula::size).sum::<usize>()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Rank

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Sigma,
    Pi,
}

/// `Σ_n` or `Π_n` relative to some jump; level 0 is quantifier free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rank {
    pub class: Class,
    pub level: u32,
}

impl Rank {
    pub const BOUNDED: Rank = Rank {
        class: Class::Sigma,
        level: 0,
    };

    pub fn sigma(level: u32) -> Self {
        Rank {
            class: Class::Sigma,
            level,
        }
    }

    pub fn pi(level: u32) -> Self {
        Rank {
            class: Class::Pi,
            level,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.level == 0
    }

    fn dual(self) -> Self {
        if self.is_bounded() {
            return self;
        }
        let class = match self.class {
            Class::Sigma => Class::Pi,
            Class::Pi => Class::Sigma,
        };
        Rank { class, ..self }
    }

    /// At most `Σ_1 ∪ Π_1`.
    pub fn at_most_one(&self) -> bool {
        self.level <= 1
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.level, self.class) {
            (0, _) => write!(f, "Δ0"),
            (n, Class::Sigma) => write!(f, "Σ{n}"),
            (n, Class::Pi) => write!(f, "Π{n}"),
        }
    }
}

/// Rank over the empty oracle.
pub fn rank(f: &Formula) -> Rank {
    rank_over(f, &Notation::zero())
}

/// Rank relative to the jump at `oracle`. Atoms reading a jump at or below
/// it are bounded, as are forcing claims at levels strictly below it.
pub fn rank_over(f: &Formula, oracle: &Notation) -> Rank {
    match f {
        Formula::Atom(Atom::Value { .. }) => Rank::BOUNDED,
        Formula::Atom(Atom::Oracle { level, .. }) => match oracle.as_finite() {
            Some(o) if (*level as u64) > o => Rank::sigma(*level - o as u32),
            _ => Rank::BOUNDED,
        },
        Formula::Not(g) => rank_over(g, oracle).dual(),
        Formula::OrStream { members, .. } => {
            let ranks: Vec<Rank> = members.iter().map(|m| rank_over(m, oracle)).collect();
            let top = ranks.iter().map(|r| r.level).max().unwrap_or(0);
            if top == 0 || ranks.iter().any(|r| r.level == top && r.class == Class::Pi) {
                Rank::sigma(top + 1)
            } else {
                Rank::sigma(top)
            }
        }
        Formula::ExistsPrefix(g) => {
            let r = rank_over(g, oracle);
            match r.class {
                _ if r.is_bounded() => Rank::sigma(1),
                Class::Sigma => r,
                Class::Pi => Rank::sigma(r.level + 1),
            }
        }
        // Forcing a formula at `level` on a finite tree is decidable from
        // the jump one above it, so the claim ranks like an atom there.
        Formula::ForcedAt { level, .. } => {
            if level < oracle {
                Rank::BOUNDED
            } else {
                match (level.as_finite(), oracle.as_finite()) {
                    (Some(l), Some(o)) => Rank::sigma((l + 1 - o) as u32),
                    _ => Rank::sigma(1),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Translation

/// The translation of `f` to level `beta` of the tower.
///
/// At zero it is `f`. At a successor `b + 1` whose predecessor translation
/// is at most `Σ_1 ∪ Π_1` over `b`, it is the claim that some prefix maps to
/// a node forcing that translation; otherwise it recurses through
/// disjunctions and negations. At a limit, formulas of finite rank `n` below
/// it are sent down to level `n` directly.
pub fn translate(
    f: &Formula,
    beta: &Notation,
    tw: &Tower,
    side: Side,
) -> Result<Formula, FormulaError> {
    let id = tw
        .segment
        .lookup(beta)
        .ok_or_else(|| FormulaError::OutOfSegment(beta.clone()))?;
    let mut memo = HashMap::new();
    translate_node(f, id, tw, side, &mut memo)
}

fn translate_node(
    f: &Formula,
    id: NodeId,
    tw: &Tower,
    side: Side,
    memo: &mut HashMap<(NodeId, *const Formula), Formula>,
) -> Result<Formula, FormulaError> {
    if let Some(done) = memo.get(&(id, f as *const Formula)) {
        return Ok(done.clone());
    }
    let seg = &tw.segment;
    let beta = seg.base(id);
    let out = match seg.node(id).kind {
        NodeKind::Zero => f.clone(),
        NodeKind::Successor => {
            let pred = seg
                .predecessor(id)
                .ok_or_else(|| FormulaError::OutOfSegment(beta.clone()))?;
            let below = translate_node(f, pred, tw, side, memo)?;
            if rank_over(&below, seg.base(pred)).at_most_one() {
                Formula::exists(package(seg.base(pred).clone(), side, below))
            } else {
                recurse(f, id, tw, side, memo)?
            }
        }
        NodeKind::Limit => {
            let r = rank(f);
            let gamma = seg
                .lookup(&Notation::finite(r.level as u64))
                .filter(|&g| seg.compare_nodes(g, id) == std::cmp::Ordering::Less);
            match gamma {
                Some(g) => {
                    let inner = translate_node(f, g, tw, side, memo)?;
                    Formula::exists(package(seg.base(g).clone(), side, inner))
                }
                None => recurse(f, id, tw, side, memo)?,
            }
        }
    };
    memo.insert((id, f as *const Formula), out.clone());
    Ok(out)
}

fn package(level: Notation, side: Side, inner: Formula) -> Formula {
    let side = if matches!(inner, Formula::Not(_)) {
        side
    } else {
        Side::Direct
    };
    Formula::forced(level, side, inner)
}

fn recurse(
    f: &Formula,
    id: NodeId,
    tw: &Tower,
    side: Side,
    memo: &mut HashMap<(NodeId, *const Formula), Formula>,
) -> Result<Formula, FormulaError> {
    Ok(match f {
        Formula::OrStream { members, exhausted } => Formula::OrStream {
            members: members
                .iter()
                .map(|m| translate_node(m, id, tw, side, memo))
                .collect::<Result<_, _>>()?,
            exhausted: *exhausted,
        },
        Formula::Not(g) => Formula::not(translate_node(g, id, tw, side, memo)?),
        Formula::ExistsPrefix(g) => Formula::exists(translate_node(g, id, tw, side, memo)?),
        other => other.clone(),
    })
}

// ---------------------------------------------------------------------------
// Bounded evaluation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    fn from_bool(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    fn not(self) -> Self {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }

    /// Disjunction over a materialized list; `exhausted` says the list is
    /// complete.
    fn any(items: impl IntoIterator<Item = Truth>, exhausted: bool) -> Self {
        let mut unknown = !exhausted;
        for t in items {
            match t {
                Truth::True => return Truth::True,
                Truth::Unknown => unknown = true,
                Truth::False => {}
            }
        }
        if unknown {
            Truth::Unknown
        } else {
            Truth::False
        }
    }
}

/// Stagewise oracles by jump height, read at a fixed stage budget.
#[derive(Clone, Debug, Default)]
pub struct OracleSet {
    pub oracles: BTreeMap<u32, OracleApproximation>,
    pub budget: u64,
}

impl OracleSet {
    pub fn new(oracles: impl IntoIterator<Item = OracleApproximation>, budget: u64) -> Self {
        OracleSet {
            oracles: oracles.into_iter().map(|o| (o.level, o)).collect(),
            budget,
        }
    }

    /// Truth of `index ∈ 0^(level)` as far as the budget settles it. The
    /// empty jump is known outright; mock oracles know their own settling
    /// times; simulated first jumps only ever add members.
    pub fn membership(&self, level: u32, index: u64) -> Truth {
        if level == 0 {
            return Truth::False;
        }
        let Some(o) = self.oracles.get(&level) else {
            return Truth::Unknown;
        };
        match &o.kind {
            OracleKind::Mock(spec) => match spec.settle.get(&index) {
                None => Truth::False,
                Some(&t) if t <= self.budget => Truth::True,
                Some(_) => Truth::Unknown,
            },
            OracleKind::Simulated(_) if level == 1 => match o.membership_at(self.budget, index) {
                Ok(true) => Truth::True,
                _ => Truth::Unknown,
            },
            OracleKind::Simulated(_) => Truth::Unknown,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Reading {
    /// The string is a prefix of a longer path.
    Path,
    /// The string is all there is.
    Witness,
}

fn eval_string(f: &Formula, s: &[u64], oracles: &OracleSet, mode: Reading) -> Truth {
    match f {
        Formula::Atom(Atom::Value { position, value }) => match s.get(*position) {
            Some(v) => Truth::from_bool(v == value),
            None if mode == Reading::Witness => Truth::False,
            None => Truth::Unknown,
        },
        Formula::Atom(Atom::Oracle { level, index }) => oracles.membership(*level, *index),
        Formula::Not(g) => eval_string(g, s, oracles, mode).not(),
        Formula::OrStream { members, exhausted } => Truth::any(
            members.iter().map(|m| eval_string(m, s, oracles, mode)),
            *exhausted,
        ),
        Formula::ExistsPrefix(g) => Truth::any(
            (0..=s.len()).map(|n| eval_string(g, &s[..n], oracles, Reading::Witness)),
            mode == Reading::Witness,
        ),
        Formula::ForcedAt { .. } => Truth::Unknown,
    }
}

/// Bounded satisfaction by a path known up to `path.len()`. True and False
/// are final: they never change as the path or the budget grows.
pub fn holds(f: &Formula, path: &[u64], oracles: &OracleSet) -> Truth {
    eval_string(f, path, oracles, Reading::Path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuperForce {
    Forces,
    RefutesStrongly,
    Undecided,
}

/// Super forcing of a `Σ_1` formula: `sigma` forces it when it witnesses
/// it, and refutes it strongly when no node of the tree extending it does.
pub fn super_force(
    t: &LevelTree,
    sigma: &FingerString,
    psi: &Formula,
    oracles: &OracleSet,
) -> SuperForce {
    match eval_string(psi, &sigma.0, oracles, Reading::Witness) {
        Truth::True => return SuperForce::Forces,
        Truth::Unknown => return SuperForce::Undecided,
        Truth::False => {}
    }
    let blocked = t
        .extensions(sigma)
        .any(|tau| eval_string(psi, &tau.0, oracles, Reading::Witness) != Truth::False);
    if blocked {
        SuperForce::Undecided
    } else {
        SuperForce::RefutesStrongly
    }
}

/// Which nodes a negation quantifies over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Extendable,
    All,
}

/// Depth-bounded forcing on the levels of a tower. Formulas are borrowed
/// for the evaluator's lifetime so their addresses can key the memo.
pub struct Forcing<'a> {
    pub tower: &'a Tower,
    pub oracles: &'a OracleSet,
    pub scope: Scope,
    memo: HashMap<(*const Formula, bool, NodeId, FingerString), Truth>,
}

impl<'a> Forcing<'a> {
    pub fn new(tower: &'a Tower, oracles: &'a OracleSet, scope: Scope) -> Self {
        Forcing {
            tower,
            oracles,
            scope,
            memo: HashMap::new(),
        }
    }

    /// Whether `sigma` forces `f` on the tree of `level`. Unknown when an
    /// oracle atom or a map is out of reach.
    pub fn forces(&mut self, level: NodeId, sigma: &FingerString, f: &'a Formula) -> Truth {
        let key = (f as *const Formula, false, level, sigma.clone());
        if let Some(&t) = self.memo.get(&key) {
            return t;
        }
        let out = match f {
            Formula::Atom(_) => eval_string(f, &sigma.0, self.oracles, Reading::Witness),
            Formula::OrStream { members, exhausted } => {
                let items: Vec<Truth> = members
                    .iter()
                    .map(|m| self.forces(level, sigma, m))
                    .collect();
                Truth::any(items, *exhausted)
            }
            Formula::ExistsPrefix(g) => {
                let items: Vec<Truth> = sigma
                    .prefixes()
                    .map(|p| self.forces(level, &p, g))
                    .collect();
                Truth::any(items, true)
            }
            Formula::ForcedAt {
                level: gamma,
                side,
                inner,
            } => match self.tower.segment.lookup(gamma) {
                None => Truth::Unknown,
                Some(g) => match treemap(self.tower, level, g, sigma) {
                    Err(_) => Truth::Unknown,
                    Ok(tau) => match (side, inner.as_ref()) {
                        (Side::Flipped, Formula::Not(chi)) => self.forces(g, &tau, chi).not(),
                        _ => self.forces(g, &tau, inner),
                    },
                },
            },
            Formula::Not(g) => self.forces_negation(level, sigma, g),
        };
        self.memo.insert(key, out);
        out
    }

    /// Whether `sigma` forces `not f`: no node above it in scope forces `f`.
    pub fn forces_negation(
        &mut self,
        level: NodeId,
        sigma: &FingerString,
        f: &'a Formula,
    ) -> Truth {
        let key = (f as *const Formula, true, level, sigma.clone());
        if let Some(&t) = self.memo.get(&key) {
            return t;
        }
        let t = self.tower.level(level).tree();
        let mut nodes: Vec<FingerString> = vec![sigma.clone()];
        nodes.extend(
            t.extensions(sigma)
                .filter(|n| self.scope == Scope::All || t.is_extendable(n))
                .cloned(),
        );
        let out = Truth::any(
            nodes
                .iter()
                .map(|n| self.forces(level, n, f))
                .collect::<Vec<_>>(),
            true,
        )
        .not();
        self.memo.insert(key, out);
        out
    }

    /// `Some(true)` when `f` is forced, `Some(false)` when its negation is.
    pub fn decision(
        &mut self,
        level: NodeId,
        sigma: &FingerString,
        f: &'a Formula,
    ) -> Option<bool> {
        if self.forces(level, sigma, f) == Truth::True {
            Some(true)
        } else if self.forces_negation(level, sigma, f) == Truth::True {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    /// `(formula, level, node)` triples compared.
    pub compared: u64,
    /// Both sides decided.
    pub decided: u64,
    /// One side forced the formula, the other its negation.
    pub conflicts: Vec<String>,
}

/// Compares forcing of `translate(f, beta)` at each extendable node of
/// `T_beta` with forcing of `f` at its bottom image.
pub fn forcing_transfer(
    tw: &Tower,
    formulas: &[Formula],
    oracles: &OracleSet,
    side: Side,
    max_len: usize,
) -> Result<TransferReport, FormulaError> {
    let mut rep = TransferReport::default();
    let bottom = tw.bottom();
    let levels: Vec<_> = tw.descending().collect();
    let translated: Vec<Vec<Formula>> = formulas
        .iter()
        .map(|f| {
            levels
                .iter()
                .map(|l| translate(f, &l.notation, tw, side))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut forcing = Forcing::new(tw, oracles, Scope::Extendable);
    for (fi, f) in formulas.iter().enumerate() {
        for (lvl, tf) in levels.iter().zip(&translated[fi]) {
            for sigma in lvl
                .tree()
                .extendable_nodes()
                .into_iter()
                .filter(|s| s.len() <= max_len)
            {
                let Ok(rho) = treemap(tw, lvl.node, bottom, &sigma) else {
                    continue;
                };
                rep.compared += 1;
                let up = forcing.decision(lvl.node, &sigma, tf);
                let down = forcing.decision(bottom, &rho, f);
                if let (Some(a), Some(b)) = (up, down) {
                    rep.decided += 1;
                    if a != b {
                        rep.conflicts.push(format!(
                            "formula {fi} at level {} node {sigma}: {a} above, {b} at {rho}",
                            lvl.notation
                        ));
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Thirty formulas, five in each of `Σ_n` and `Π_n` for `n` in 1..=3.
pub fn regression_suite() -> Vec<Formula> {
    let sigma1 = |i: u64| -> Formula {
        match i % 5 {
            0 => Formula::exists(Formula::value(0, i % 2)),
            1 => Formula::exists(Formula::or(vec![
                Formula::value(1, 0),
                Formula::value(2, i),
            ])),
            2 => Formula::exists(Formula::not(Formula::value(0, 1))),
            3 => Formula::or(vec![Formula::value(0, 0), Formula::value(1, 1)]),
            _ => Formula::oracle(1, i),
        }
    };
    let pi1 = |i: u64| Formula::not(sigma1(i + 1));
    let sigma2 = |i: u64| Formula::or(vec![pi1(i), pi1(i + 2)]);
    let pi2 = |i: u64| Formula::not(sigma2(i));
    let sigma3 = |i: u64| Formula::or(vec![pi2(i), pi2(i + 1), pi1(i)]);
    let pi3 = |i: u64| Formula::not(sigma3(i));
    let mut out = Vec::new();
    for i in 0..5 {
        out.push(sigma1(i));
        out.push(pi1(i));
        out.push(sigma2(i));
        out.push(pi2(i));
        out.push(sigma3(i));
        out.push(pi3(i));
    }
    out
}

// ---------------------------------------------------------------------------
// Text format

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(Atom::Value { position, value }) => write!(f, "(val {position} {value})"),
            Formula::Atom(Atom::Oracle { level, index }) => write!(f, "(orc {level} {index})"),
            Formula::Not(g) => write!(f, "(not {g})"),
            Formula::OrStream { members, exhausted } => {
                write!(f, "({}", if *exhausted { "or" } else { "or*" })?;
                for m in members {
                    write!(f, " {m}")?;
                }
                write!(f, ")")
            }
            Formula::ExistsPrefix(g) => write!(f, "(ex {g})"),
            Formula::ForcedAt { level, side, inner } => {
                let side = match side {
                    Side::Direct => "direct",
                    Side::Flipped => "flipped",
                };
                let level = level.to_string();
                if level.contains(['(', ')', ' ']) {
                    write!(f, "(forced \"{level}\" {side} {inner})")
                } else {
                    write!(f, "(forced {level} {side} {inner})")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Word(String),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, FormulaError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '(' => {
                out.push((i, Token::Open));
                chars.next();
            }
            ')' => {
                out.push((i, Token::Close));
                chars.next();
            }
            '"' => {
                chars.next();
                let mut w = String::new();
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, ch)) => w.push(ch),
                        None => {
                            return Err(FormulaError::Parse {
                                pos: i,
                                msg: "unterminated quote".into(),
                            })
                        }
                    }
                }
                out.push((i, Token::Word(w)));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut w = String::new();
                while let Some(&(_, ch)) = chars.peek() {
                    if ch.is_whitespace() || ch == '(' || ch == ')' || ch == '"' {
                        break;
                    }
                    w.push(ch);
                    chars.next();
                }
                out.push((i, Token::Word(w)));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        let pos = self.tokens.get(self.at).map_or(self.end, |t| t.0);
        Err(FormulaError::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn word(&mut self) -> Result<String, FormulaError> {
        match self.next() {
            Some(Token::Word(w)) => Ok(w),
            _ => {
                self.at -= 1;
                self.err("expected a word")
            }
        }
    }

    fn number<T: FromStr>(&mut self) -> Result<T, FormulaError> {
        let w = self.word()?;
        w.parse().or_else(|_| {
            self.at -= 1;
            self.err(format!("expected a natural number, found `{w}`"))
        })
    }

    fn close(&mut self) -> Result<(), FormulaError> {
        match self.next() {
            Some(Token::Close) => Ok(()),
            _ => {
                self.at -= 1;
                self.err("expected `)`")
            }
        }
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        if self.next() != Some(Token::Open) {
            self.at -= 1;
            return self.err("expected `(`");
        }
        let head = self.word()?;
        let f = match head.as_str() {
            "val" => Formula::value(self.number()?, self.number()?),
            "orc" => Formula::oracle(self.number()?, self.number()?),
            "not" => Formula::not(self.formula()?),
            "ex" => Formula::exists(self.formula()?),
            "or" | "or*" => {
                let mut members = Vec::new();
                while matches!(self.tokens.get(self.at), Some((_, Token::Open))) {
                    members.push(self.formula()?);
                }
                Formula::OrStream {
                    members,
                    exhausted: head == "or",
                }
            }
            "forced" => {
                let level_text = self.word()?;
                let level: Notation = level_text.parse().or_else(|e| {
                    self.at -= 1;
                    self.err(format!("bad level `{level_text}`: {e}"))
                })?;
                let side = match self.word()?.as_str() {
                    "direct" => Side::Direct,
                    "flipped" => Side::Flipped,
                    other => {
                        self.at -= 1;
                        return self.err(format!("unknown side `{other}`"));
                    }
                };
                Formula::forced(level, side, self.formula()?)
            }
            other => {
                self.at -= 1;
                return self.err(format!("unknown form `{other}`"));
            }
        };
        self.close()?;
        Ok(f)
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        at: 0,
        end: text.len(),
    };
    let f = p.formula()?;
    if p.at < p.tokens.len() {
        return p.err("trailing input");
    }
    Ok(f)
}

impl FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{mock_oracle, SettleSpec};

    #[test]
    fn ranks() {
        let a = Formula::value(0, 0);
        assert_eq!(rank(&Formula::exists(a.clone())), Rank::sigma(1));
        assert_eq!(rank(&Formula::not(Formula::exists(a.clone()))), Rank::pi(1));
        let p1 = Formula::not(Formula::exists(a));
        assert_eq!(rank(&Formula::or(vec![p1.clone(), p1])), Rank::sigma(2));
        for (k, f) in regression_suite().iter().enumerate() {
            let want = if k % 2 == 0 { Class::Sigma } else { Class::Pi };
            let r = rank(f);
            assert_eq!((r.class, r.level), (want, (k % 6 / 2 + 1) as u32), "{f}");
        }
    }

    #[test]
    fn round_trip() {
        for f in regression_suite() {
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
        let f = Formula::forced(
            "w^(w+1)".parse().unwrap(),
            Side::Flipped,
            Formula::value(0, 0),
        );
        assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        assert!(parse_formula("(val 1)").is_err());
        assert!(parse_formula("(val 1 2) (val 3 4)").is_err());
    }

    #[test]
    fn bounded_satisfaction() {
        let spec = SettleSpec::new(1, [(3, 5)]);
        let o = OracleSet::new([mock_oracle(spec, 1)], 10);
        assert_eq!(holds(&Formula::oracle(1, 3), &[], &o), Truth::True);
        assert_eq!(holds(&Formula::oracle(1, 4), &[], &o), Truth::False);
        let early = OracleSet {
            budget: 2,
            ..o.clone()
        };
        assert_eq!(holds(&Formula::oracle(1, 3), &[], &early), Truth::Unknown);
        assert_eq!(
            holds(&Formula::exists(Formula::value(1, 7)), &[0, 7], &o),
            Truth::True
        );
        assert_eq!(
            holds(&Formula::exists(Formula::value(1, 7)), &[0, 6], &o),
            Truth::Unknown
        );
        let open = Formula::OrStream {
            members: vec![Formula::value(0, 9)],
            exhausted: false,
        };
        assert_eq!(holds(&open, &[1], &o), Truth::Unknown);
    }

    #[test]
    fn super_forcing_examples() {
        let o = OracleSet::default();
        let t = LevelTree::new([FingerString(vec![0, 0]), FingerString(vec![1, 1])], 2);
        let psi = Formula::exists(Formula::value(0, 0));
        assert_eq!(
            super_force(&t, &FingerString(vec![0]), &psi, &o),
            SuperForce::Forces
        );
        assert_eq!(
            super_force(&t, &FingerString(vec![1]), &psi, &o),
            SuperForce::RefutesStrongly
        );
        let late = Formula::exists(Formula::oracle(1, 0));
        assert_eq!(
            super_force(&t, &FingerString(vec![1]), &late, &o),
            SuperForce::Undecided
        );
    }
}
