//! Finite-depth trees of strings over the naturals, string codes, liveness,
//! the structural predicates on levels and maps, and uniformization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::FiniteFunction;
use crate::nicety::PartResult;

/// A finite string of naturals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FingerString(pub Vec<u64>);

/// Elias-gamma length of `v + 1`.
fn gamma_len(v: u64) -> u64 {
    let bits = 64 - (v + 1).leading_zeros() as u64;
    2 * bits - 1
}

impl FingerString {
    pub fn empty() -> Self {
        FingerString(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u64] {
        &self.0
    }

    pub fn child(&self, k: u64) -> FingerString {
        let mut v = self.0.clone();
        v.push(k);
        FingerString(v)
    }

    pub fn concat(&self, tail: &[u64]) -> FingerString {
        let mut v = self.0.clone();
        v.extend_from_slice(tail);
        FingerString(v)
    }

    pub fn parent(&self) -> Option<FingerString> {
        (!self.0.is_empty()).then(|| FingerString(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn last(&self) -> Option<u64> {
        self.0.last().copied()
    }

    pub fn prefix(&self, n: usize) -> FingerString {
        FingerString(self.0[..n.min(self.0.len())].to_vec())
    }

    /// `self ⊆ other`.
    pub fn is_prefix_of(&self, other: &FingerString) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn compatible(&self, other: &FingerString) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    /// Prefixes from the empty string up to and including `self`.
    pub fn prefixes(&self) -> impl Iterator<Item = FingerString> + '_ {
        (0..=self.0.len()).map(|n| self.prefix(n))
    }

    /// The canonical code: a leading 1 bit followed by the Elias gamma code
    /// of each `symbol + 1`, read in binary, minus one. Proper extensions
    /// have strictly larger codes and `code(<>) = 0`.
    pub fn code(&self) -> BigUint {
        let mut bits: Vec<bool> = vec![true];
        for &v in &self.0 {
            let w = v as u128 + 1;
            let n = 128 - w.leading_zeros() as usize;
            bits.extend(std::iter::repeat_n(false, n - 1));
            bits.extend((0..n).rev().map(|i| (w >> i) & 1 == 1));
        }
        let mut out = BigUint::from(0u32);
        for b in bits {
            out <<= 1;
            if b {
                out += 1u32;
            }
        }
        out - 1u32
    }

    /// Number of gamma bits in the code, `bit_length(code + 1) - 1`. This is
    /// the clock against which stage rules compare strings.
    pub fn clock(&self) -> u64 {
        self.0.iter().map(|&v| gamma_len(v)).sum()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }
}

impl fmt::Display for FingerString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ">")
    }
}

impl From<Vec<u64>> for FingerString {
    fn from(v: Vec<u64>) -> Self {
        FingerString(v)
    }
}

/// Pairs a symbol with the stage that created it: `k * stride + s`. With
/// `stride` above every stage this is injective and strictly increasing in
/// both arguments, so a fresh symbol never repeats an earlier one. `None` on
/// overflow.
pub fn stage_pair(k: u64, s: u64, stride: u64) -> Option<u64> {
    debug_assert!(s < stride);
    k.checked_mul(stride)?.checked_add(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Liveness {
    Live,
    Dead,
    Frontier,
}

/// A prefix-closed finite set of strings with a depth horizon. A node is
/// frontier once it reaches the depth, live if some extension reaches it,
/// and dead otherwise or when it lies above an explicitly killed node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelTree {
    nodes: BTreeSet<FingerString>,
    killed: BTreeSet<FingerString>,
    depth: usize,
    liveness: BTreeMap<FingerString, Liveness>,
}

impl LevelTree {
    pub fn new(strings: impl IntoIterator<Item = FingerString>, depth: usize) -> Self {
        Self::with_killed(strings, BTreeSet::new(), depth)
    }

    pub fn with_killed(
        strings: impl IntoIterator<Item = FingerString>,
        killed: BTreeSet<FingerString>,
        depth: usize,
    ) -> Self {
        let mut nodes = BTreeSet::from([FingerString::empty()]);
        for s in strings {
            for p in s.prefixes() {
                nodes.insert(p);
            }
        }
        let mut t = LevelTree {
            nodes,
            killed,
            depth,
            liveness: BTreeMap::new(),
        };
        t.recompute();
        t
    }

    /// All strings of length at most `depth` over `0..branching`.
    pub fn full(branching: u64, depth: usize) -> Self {
        let mut level = vec![FingerString::empty()];
        let mut all = level.clone();
        for _ in 0..depth {
            level = level
                .iter()
                .flat_map(|s| (0..branching).map(move |k| s.child(k)))
                .collect();
            all.extend(level.iter().cloned());
        }
        Self::new(all, depth)
    }

    pub fn full_binary(depth: usize) -> Self {
        Self::full(2, depth)
    }

    fn recompute(&mut self) {
        let mut live = BTreeMap::new();
        // Longest strings first so children are settled before parents.
        let mut order: Vec<&FingerString> = self.nodes.iter().collect();
        order.sort_by_key(|s| std::cmp::Reverse(s.len()));
        for s in order {
            let killed = s.prefixes().any(|p| self.killed.contains(&p));
            let state = if killed {
                Liveness::Dead
            } else if s.len() >= self.depth {
                Liveness::Frontier
            } else {
                let reaches = self
                    .children(s)
                    .any(|c| matches!(live.get(c), Some(Liveness::Live | Liveness::Frontier)));
                if reaches {
                    Liveness::Live
                } else {
                    Liveness::Dead
                }
            };
            live.insert(s.clone(), state);
        }
        self.liveness = live;
    }

    /// Materialized children of `s`, in increasing order.
    pub fn children<'a>(
        &'a self,
        s: &'a FingerString,
    ) -> impl Iterator<Item = &'a FingerString> + 'a {
        self.extensions(s).filter(move |t| t.len() == s.len() + 1)
    }

    /// All materialized proper extensions of `s`, in lexicographic order.
    pub fn extensions<'a>(
        &'a self,
        s: &'a FingerString,
    ) -> impl Iterator<Item = &'a FingerString> + 'a {
        self.nodes
            .range(s.clone()..)
            .skip(1)
            .take_while(move |t| s.is_prefix_of(t))
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, s: &FingerString) -> bool {
        self.nodes.contains(s)
    }

    pub fn nodes(&self) -> &BTreeSet<FingerString> {
        &self.nodes
    }

    pub fn killed(&self) -> &BTreeSet<FingerString> {
        &self.killed
    }

    pub fn liveness(&self, s: &FingerString) -> Option<Liveness> {
        self.liveness.get(s).copied()
    }

    pub fn kill(&mut self, s: &FingerString) {
        self.killed.insert(s.clone());
        self.recompute();
    }

    pub fn is_extendable(&self, s: &FingerString) -> bool {
        matches!(self.liveness(s), Some(Liveness::Live | Liveness::Frontier))
    }

    /// Nodes with a frontier-reaching extension.
    pub fn extendable_nodes(&self) -> BTreeSet<FingerString> {
        self.liveness
            .iter()
            .filter(|(_, l)| matches!(l, Liveness::Live | Liveness::Frontier))
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Extendable nodes of length exactly `n`.
    pub fn extendable_at(&self, n: usize) -> Vec<FingerString> {
        self.liveness
            .iter()
            .filter(|(s, l)| s.len() == n && matches!(l, Liveness::Live | Liveness::Frontier))
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn truncate(&self, d: usize) -> LevelTree {
        let nodes = self.nodes.iter().filter(|s| s.len() <= d).cloned();
        let killed = self
            .killed
            .iter()
            .filter(|s| s.len() <= d)
            .cloned()
            .collect();
        LevelTree::with_killed(nodes, killed, d)
    }

    /// The nodes of length at most `d`.
    pub fn restrict(&self, d: usize) -> BTreeSet<FingerString> {
        self.nodes
            .iter()
            .filter(|s| s.len() <= d)
            .cloned()
            .collect()
    }

    pub fn to_dump(&self) -> TreeDump {
        TreeDump {
            schema: TREE_SCHEMA.into(),
            depth: self.depth,
            nodes: self
                .liveness
                .iter()
                .map(|(s, l)| TreeDumpNode {
                    string: s.clone(),
                    liveness: *l,
                })
                .collect(),
            killed: self.killed.iter().cloned().collect(),
        }
    }

    pub fn from_dump(d: &TreeDump) -> LevelTree {
        LevelTree::with_killed(
            d.nodes.iter().map(|n| n.string.clone()),
            d.killed.iter().cloned().collect(),
            d.depth,
        )
    }

    /// Graphviz rendering; dead nodes are grey.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box, fontname=monospace];\n");
        let id = |s: &FingerString| format!("\"{s}\"");
        for s in &self.nodes {
            let color = match self.liveness(s) {
                Some(Liveness::Dead) => "grey",
                Some(Liveness::Frontier) => "blue",
                _ => "black",
            };
            out.push_str(&format!("  {} [color={color}];\n", id(s)));
            if let Some(p) = s.parent() {
                out.push_str(&format!("  {} -> {};\n", id(&p), id(s)));
            }
        }
        out.push_str("}\n");
        out
    }
}

pub const TREE_SCHEMA: &str = "towerlab.tree/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDumpNode {
    pub string: FingerString,
    pub liveness: Liveness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDump {
    pub schema: String,
    pub depth: usize,
    pub nodes: Vec<TreeDumpNode>,
    pub killed: Vec<FingerString>,
}

/// A family of oracle functionals `Phi_i` run on strings for a bounded number
/// of stages; the output is the sequence of converged values.
pub trait PhiFamily {
    fn output(&self, i: u64, tau: &FingerString, stage: u64) -> Vec<u64>;
}

/// `Phi_i(tau)(y)` is bit `i mod 8` of `tau(y)`, defined for `y < stage`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockPhi;

impl PhiFamily for MockPhi {
    fn output(&self, i: u64, tau: &FingerString, stage: u64) -> Vec<u64> {
        tau.0
            .iter()
            .take(stage as usize)
            .map(|v| (v >> (i % 8)) & 1)
            .collect()
    }
}

/// Agreement wherever both are defined.
pub fn outputs_compatible(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x == y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Padded,
    Largeness,
    Disagreement,
    UniquelySmall,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("{0:?} needs an input that was not supplied")]
    MissingInput(Predicate),
}

/// Inputs to [`verify_structure`]. The map sends the nodes of `domain` into
/// the tree under test.
#[derive(Clone, Copy, Default)]
pub struct StructureInputs<'a> {
    pub theta: Option<&'a BTreeMap<FingerString, FingerString>>,
    pub domain: Option<&'a LevelTree>,
    pub xi_probe: Option<&'a FiniteFunction>,
    pub phi: Option<&'a dyn PhiFamily>,
    pub phi_budget: u64,
    pub copylen: u64,
}

pub type StructureReport = BTreeMap<Predicate, PartResult>;

/// Checks the requested predicates literally on the materialized tree.
pub fn verify_structure(
    t: &LevelTree,
    inputs: &StructureInputs<'_>,
    which: &[Predicate],
) -> Result<StructureReport, TreeError> {
    let mut out = StructureReport::new();
    for &p in which {
        let r = match p {
            Predicate::Padded => check_padded(t, inputs.copylen),
            Predicate::Largeness => {
                let theta = inputs.theta.ok_or(TreeError::MissingInput(p))?;
                check_largeness(theta)
            }
            Predicate::Disagreement => {
                let theta = inputs.theta.ok_or(TreeError::MissingInput(p))?;
                let domain = inputs.domain.ok_or(TreeError::MissingInput(p))?;
                let phi = inputs.phi.ok_or(TreeError::MissingInput(p))?;
                check_disagreement(t, domain, theta, phi, inputs.phi_budget, inputs.copylen)
            }
            Predicate::UniquelySmall => {
                let xi = inputs.xi_probe.ok_or(TreeError::MissingInput(p))?;
                check_uniquely_small(t, xi)
            }
        };
        out.insert(p, r);
    }
    Ok(out)
}

fn check_padded(t: &LevelTree, copylen: u64) -> PartResult {
    let mut r = PartResult::new();
    for s in t.extendable_nodes() {
        if s.len() % 2 != 0 || (s.len() as u64) < copylen || s.len() >= t.depth() {
            continue;
        }
        r.checked += 1;
        for k in [0, 1] {
            if !t.contains(&s.child(k)) {
                r.fail(format!("{s} lacks child {k}"));
            }
        }
    }
    r
}

fn check_largeness(theta: &BTreeMap<FingerString, FingerString>) -> PartResult {
    let mut r = PartResult::new();
    for (sigma, img) in theta {
        r.checked += 1;
        if !img.is_non_decreasing() {
            r.fail(format!("image {img} of {sigma} decreases"));
        }
        let (Some(parent), Some(i)) = (sigma.parent(), sigma.last()) else {
            continue;
        };
        let Some(pimg) = theta.get(&parent) else {
            continue;
        };
        if !pimg.is_prefix_of(img) {
            r.fail(format!("image {img} of {sigma} does not extend {pimg}"));
        } else if img.0[pimg.len()..].iter().any(|&v| v < i) {
            r.fail(format!("image {img} of {sigma} appends a value below {i}"));
        }
    }
    r
}

fn check_disagreement(
    t: &LevelTree,
    domain: &LevelTree,
    theta: &BTreeMap<FingerString, FingerString>,
    phi: &dyn PhiFamily,
    budget: u64,
    copylen: u64,
) -> PartResult {
    let mut r = PartResult::new();
    for sigma in domain.nodes() {
        if sigma.len() % 2 != 0 || (sigma.len() as u64) < copylen {
            continue;
        }
        let (c0, c1) = (sigma.child(0), sigma.child(1));
        if !domain.contains(&c0) || !domain.contains(&c1) {
            continue;
        }
        let (Some(img), Some(t0), Some(t1)) = (theta.get(sigma), theta.get(&c0), theta.get(&c1))
        else {
            continue;
        };
        r.checked += 1;
        let i = sigma.len() as u64 / 2;
        if !outputs_compatible(&phi.output(i, t0, budget), &phi.output(i, t1, budget)) {
            continue;
        }
        // Pairwise compatible outputs are exactly those that are prefixes
        // of the longest one.
        let outs: Vec<Vec<u64>> = t
            .extensions(img)
            .map(|x| phi.output(i, x, budget))
            .collect();
        let longest = outs
            .iter()
            .max_by_key(|o| o.len())
            .cloned()
            .unwrap_or_default();
        if outs.iter().any(|o| !outputs_compatible(o, &longest)) {
            r.fail(format!(
                "{sigma}: child images agree under Phi_{i} but extensions of {img} disagree"
            ));
        }
    }
    r
}

fn check_uniquely_small(t: &LevelTree, xi: &FiniteFunction) -> PartResult {
    let mut r = PartResult::new();
    for x in 0..xi.len().min(t.depth()) {
        let bound = xi.0[x];
        let small: Vec<FingerString> = t
            .extendable_at(x + 1)
            .into_iter()
            .filter(|s| s.0[x] <= bound)
            .collect();
        r.checked += 1;
        if small.len() > 1 {
            r.fail(format!(
                "x={x}: {} and {} are both small",
                small[0], small[1]
            ));
        }
    }
    r
}

/// An exclusion certificate: a computation of `step` steps consulting
/// columns up to `column`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub step: u64,
    pub column: u64,
}

/// Keeps a string of length `l > copylen` unless some prefix carries a
/// certificate with step and column at most `l`. Strings up to `copylen`
/// are copied verbatim from the universe.
pub fn uniformize(
    universe: &LevelTree,
    certs: &BTreeMap<FingerString, Certificate>,
    copylen: u64,
) -> LevelTree {
    let kept = universe.nodes().iter().filter(|s| {
        let l = s.len() as u64;
        l <= copylen
            || !s
                .prefixes()
                .any(|p| certs.get(&p).is_some_and(|c| c.step <= l && c.column <= l))
    });
    LevelTree::new(kept.cloned().collect::<Vec<_>>(), universe.depth())
}

/// The tree an exclusion spec describes: strings none of whose prefixes
/// carry a certificate at all.
pub fn refuted_tree(
    universe: &LevelTree,
    certs: &BTreeMap<FingerString, Certificate>,
) -> LevelTree {
    let kept = universe
        .nodes()
        .iter()
        .filter(|s| !s.prefixes().any(|p| certs.contains_key(&p)))
        .cloned()
        .collect::<Vec<_>>();
    LevelTree::new(kept, universe.depth())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(v: &[u64]) -> FingerString {
        FingerString(v.to_vec())
    }

    #[test]
    fn codes_monotone_and_injective() {
        let mut seen = BTreeSet::new();
        let mut all = vec![FingerString::empty()];
        let mut frontier = all.clone();
        for _ in 0..4 {
            frontier = frontier
                .iter()
                .flat_map(|s| (0..5).map(move |k| s.child(k)))
                .collect();
            all.extend(frontier.iter().cloned());
        }
        for s in &all {
            assert!(seen.insert(s.code()));
            if let Some(p) = s.parent() {
                assert!(p.code() < s.code());
                assert!(p.clock() < s.clock());
            }
        }
        assert_eq!(FingerString::empty().code(), BigUint::from(0u32));
        assert_eq!(fs(&[0]).clock(), 1);
        assert_eq!(fs(&[1]).clock(), 3);
    }

    #[test]
    fn truncation_and_liveness() {
        let t = LevelTree::full_binary(4);
        assert_eq!(t.truncate(2), LevelTree::full_binary(2));
        let mut t = LevelTree::full_binary(3);
        t.kill(&fs(&[0]));
        assert!(!t.extendable_nodes().contains(&fs(&[0])));
        assert!(!t.extendable_nodes().contains(&fs(&[0, 1])));
        let chain = LevelTree::new([fs(&[0, 0, 0])], 3);
        let ext: Vec<_> = chain.extendable_nodes().into_iter().collect();
        assert_eq!(ext, vec![fs(&[]), fs(&[0]), fs(&[0, 0]), fs(&[0, 0, 0])]);
    }

    #[test]
    fn structure_examples() {
        let t = LevelTree::full_binary(4);
        let rep = verify_structure(&t, &StructureInputs::default(), &[Predicate::Padded]).unwrap();
        assert!(rep[&Predicate::Padded].pass);

        let theta: BTreeMap<_, _> = [
            (fs(&[]), fs(&[])),
            (fs(&[3]), fs(&[3])),
            (fs(&[3, 1]), fs(&[3, 1])),
        ]
        .into();
        let inputs = StructureInputs {
            theta: Some(&theta),
            ..Default::default()
        };
        let rep = verify_structure(&t, &inputs, &[Predicate::Largeness]).unwrap();
        assert!(!rep[&Predicate::Largeness].pass);

        let two = LevelTree::new([fs(&[0, 9, 9]), fs(&[1, 9, 9])], 3);
        let xi = FiniteFunction(vec![5, 5, 5]);
        let inputs = StructureInputs {
            xi_probe: Some(&xi),
            ..Default::default()
        };
        let rep = verify_structure(&two, &inputs, &[Predicate::UniquelySmall]).unwrap();
        assert!(!rep[&Predicate::UniquelySmall].pass);
        assert!(rep[&Predicate::UniquelySmall].witnesses[0].starts_with("x=0"));

        assert_eq!(
            verify_structure(&t, &StructureInputs::default(), &[Predicate::Largeness]),
            Err(TreeError::MissingInput(Predicate::Largeness))
        );
    }

    #[test]
    fn uniformize_examples() {
        let u = LevelTree::full_binary(10);
        assert_eq!(uniformize(&u, &BTreeMap::new(), 0), u);
        let sigma = fs(&[0, 1, 0, 1, 1]);
        let certs = BTreeMap::from([(sigma.clone(), Certificate { step: 2, column: 1 })]);
        assert!(!uniformize(&u, &certs, 0).contains(&sigma));
        let certs = BTreeMap::from([(sigma.clone(), Certificate { step: 9, column: 1 })]);
        let w = uniformize(&u, &certs, 0);
        assert!(w.contains(&sigma));
        assert!(w.contains(&fs(&[0, 1, 0, 1, 1, 0, 0, 0])));
        assert!(!w.contains(&fs(&[0, 1, 0, 1, 1, 0, 0, 0, 0])));
        assert_eq!(
            w.extendable_nodes(),
            refuted_tree(&u, &certs).extendable_nodes()
        );
    }
}
