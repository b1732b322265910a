//! Nice notations: the enumseq tree with lower-bound tagging, the `<_L`
//! order on addresses, nicification, the niceness checker and the
//! copylen / pred tables.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notation::{compare, nat_sum, Kind, Notation};

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NicetyError {
    #[error("enum tree node cap of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("{0} is not below the segment top")]
    OutOfSegment(Notation),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Zero,
    Successor,
    Limit,
}

impl NodeKind {
    pub fn of(n: &Notation) -> Self {
        match n.classify() {
            Kind::Zero => NodeKind::Zero,
            Kind::Successor(_) => NodeKind::Successor,
            Kind::Limit => NodeKind::Limit,
        }
    }
}

/// The `<_L` order: a proper extension is smaller, otherwise the first
/// difference decides.
pub fn lex_compare(a: &[Notation], b: &[Notation]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match compare(x, y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    b.len().cmp(&a.len())
}

#[derive(Clone, Debug)]
struct EnumNode {
    base: Notation,
    lower: Notation,
    parent: Option<NodeId>,
    child_index: u64,
    children: Vec<NodeId>,
    exhausted: bool,
}

/// Lazily generated enumseq tree below a fixed top notation.
#[derive(Clone, Debug)]
pub struct EnumTree {
    nodes: Vec<EnumNode>,
    index: HashMap<Notation, NodeId>,
    cap: usize,
}

/// Least `g` with `g + m = t` for finite `m` and `g >= b`.
fn least_strip(t: &Notation, b: &Notation) -> Option<Notation> {
    let (delta, k) = t.split_finite();
    if compare(b, &delta) != Ordering::Greater {
        return Some(delta);
    }
    let (b_delta, b_k) = b.split_finite();
    (b_delta == delta && b_k <= k).then(|| b.clone())
}

impl EnumTree {
    pub fn new(top: Notation, cap: usize) -> Self {
        let root = EnumNode {
            base: top.clone(),
            lower: Notation::zero(),
            parent: None,
            child_index: 0,
            children: Vec::new(),
            exhausted: false,
        };
        EnumTree {
            nodes: vec![root],
            index: HashMap::from([(top, 0)]),
            cap,
        }
    }

    pub fn top(&self) -> &Notation {
        &self.nodes[0].base
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn base(&self, id: NodeId) -> &Notation {
        &self.nodes[id].base
    }

    pub fn lower_bound(&self, id: NodeId) -> &Notation {
        &self.nodes[id].lower
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn child_index(&self, id: NodeId) -> u64 {
        self.nodes[id].child_index
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn is_exhausted(&self, id: NodeId) -> bool {
        self.nodes[id].exhausted
    }

    pub fn lookup(&self, beta: &Notation) -> Option<NodeId> {
        self.index.get(beta).copied()
    }

    /// Generates the next child of `id`, or `None` once the children are
    /// exhausted.
    ///
    /// With `k` the node's notation, `l` its lower bound and `b = l` for the
    /// first child or `mu + 1` after the maximal child `mu`: a limit `k`
    /// targets the least `k[n] >= b`, a successor `k` targets its predecessor,
    /// and the child is the least `g >= b` with `g + m` equal to the target.
    pub fn next_child(&mut self, id: NodeId) -> Result<Option<NodeId>, NicetyError> {
        if self.nodes[id].exhausted {
            return Ok(None);
        }
        let node = &self.nodes[id];
        let kappa = node.base.clone();
        let first = node.children.is_empty();
        let b = match node.children.last() {
            None => node.lower.clone(),
            Some(&c) => self.nodes[c].base.succ(),
        };
        let target = if compare(&b, &kappa) != Ordering::Less {
            None
        } else {
            match kappa.classify() {
                Kind::Zero => None,
                Kind::Successor(p) => Some(p),
                Kind::Limit => {
                    let mut n = 0;
                    loop {
                        let t = kappa.fund(n).expect("limit");
                        if compare(&t, &b) != Ordering::Less {
                            break Some(t);
                        }
                        n += 1;
                    }
                }
            }
        };
        let child = target
            .and_then(|t| least_strip(&t, &b))
            .filter(|g| compare(g, &kappa) == Ordering::Less);
        let Some(gamma) = child else {
            self.nodes[id].exhausted = true;
            return Ok(None);
        };
        if self.nodes.len() >= self.cap {
            return Err(NicetyError::BudgetExhausted(self.cap));
        }
        let lower = if first {
            self.nodes[id].lower.clone()
        } else {
            b
        };
        let cid = self.nodes.len();
        let child_index = self.nodes[id].children.len() as u64;
        self.index.insert(gamma.clone(), cid);
        self.nodes.push(EnumNode {
            base: gamma,
            lower,
            parent: Some(id),
            child_index,
            children: Vec::new(),
            exhausted: false,
        });
        self.nodes[id].children.push(cid);
        Ok(Some(cid))
    }

    /// The `n`-th child of `id`, generating as needed.
    pub fn child(&mut self, id: NodeId, n: usize) -> Result<Option<NodeId>, NicetyError> {
        while self.nodes[id].children.len() <= n {
            if self.next_child(id)?.is_none() {
                return Ok(None);
            }
        }
        Ok(Some(self.nodes[id].children[n]))
    }

    /// Finds (materializing if needed) the node whose notation is `beta`.
    pub fn locate(&mut self, beta: &Notation) -> Result<NodeId, NicetyError> {
        if compare(beta, self.top()) == Ordering::Greater {
            return Err(NicetyError::OutOfSegment(beta.clone()));
        }
        let mut id = 0;
        loop {
            if &self.nodes[id].base == beta {
                return Ok(id);
            }
            let mut next = None;
            for &c in &self.nodes[id].children {
                if compare(&self.nodes[c].base, beta) != Ordering::Less {
                    next = Some(c);
                    break;
                }
            }
            if next.is_none() {
                while let Some(c) = self.next_child(id)? {
                    if compare(&self.nodes[c].base, beta) != Ordering::Less {
                        next = Some(c);
                        break;
                    }
                }
            }
            // Termination of the descent is the content of the order theorem;
            // a miss here means the child rule failed to cover `beta`.
            id = next.ok_or_else(|| NicetyError::OutOfSegment(beta.clone()))?;
        }
    }

    pub fn address(&self, id: NodeId) -> Vec<Notation> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            out.push(self.nodes[c].base.clone());
            cur = self.nodes[c].parent;
        }
        out.reverse();
        out
    }

    /// `enumseq(beta)`, materializing the path to `beta`.
    pub fn enumseq(&mut self, beta: &Notation) -> Result<Vec<Notation>, NicetyError> {
        let id = self.locate(beta)?;
        Ok(self.address(id))
    }
}

/// How much of the (infinite) enum tree a segment materializes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Materialize {
    /// Children generated per node, breadth first.
    pub width: usize,
    /// Hard cap on materialized nodes; breadth-first expansion stops there.
    pub max_nodes: usize,
}

impl Default for Materialize {
    fn default() -> Self {
        Materialize {
            width: 8,
            max_nodes: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiceNode {
    pub base: Notation,
    pub address: Vec<Notation>,
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub child_index: u64,
    /// Materialized children; for a limit these are its fundamental sequence.
    pub children: Vec<NodeId>,
    pub children_complete: bool,
    pub pred: Option<NodeId>,
    pub copylen: u64,
}

/// A frozen, materialized fragment of a nicified segment. Extended segments
/// are forests whose roots are ordered by their notations.
#[derive(Clone, Debug)]
pub struct NiceSegment {
    nodes: Vec<NiceNode>,
    roots: Vec<NodeId>,
    by_base: HashMap<Notation, NodeId>,
    ascending: Vec<NodeId>,
}

impl NiceSegment {
    fn from_parts(mut nodes: Vec<NiceNode>, roots: Vec<NodeId>) -> Self {
        // pred and copylen follow the tree: the parent when it is a limit.
        let mut order: Vec<NodeId> = Vec::with_capacity(nodes.len());
        let mut stack: Vec<NodeId> = roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(nodes[id].children.iter().rev().copied());
        }
        for &id in &order {
            let (pred, copylen) = match nodes[id].parent {
                Some(p) if nodes[p].kind == NodeKind::Limit => {
                    (Some(p), nodes[p].copylen + nodes[id].child_index)
                }
                _ => (None, 0),
            };
            nodes[id].pred = pred;
            nodes[id].copylen = copylen;
        }
        let by_base = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.base.clone(), i))
            .collect();
        let mut ascending: Vec<NodeId> = (0..nodes.len()).collect();
        ascending.sort_by(|&a, &b| compare(&nodes[a].base, &nodes[b].base));
        NiceSegment {
            nodes,
            roots,
            by_base,
            ascending,
        }
    }

    fn from_tree(tree: &EnumTree) -> Self {
        let nodes = (0..tree.len())
            .map(|id| NiceNode {
                base: tree.base(id).clone(),
                address: tree.address(id),
                kind: NodeKind::of(tree.base(id)),
                parent: tree.parent(id),
                child_index: tree.child_index(id),
                children: tree.children(id).to_vec(),
                children_complete: tree.is_exhausted(id),
                pred: None,
                copylen: 0,
            })
            .collect();
        Self::from_parts(nodes, vec![0])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &NiceNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[NiceNode] {
        &self.nodes
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    /// The maximal notation of the segment.
    pub fn top(&self) -> NodeId {
        *self.ascending.last().expect("segments are nonempty")
    }

    pub fn top_base(&self) -> &Notation {
        &self.nodes[self.top()].base
    }

    pub fn base(&self, id: NodeId) -> &Notation {
        &self.nodes[id].base
    }

    pub fn lookup(&self, beta: &Notation) -> Option<NodeId> {
        self.by_base.get(beta).copied()
    }

    /// Node ids in increasing order.
    pub fn ascending(&self) -> &[NodeId] {
        &self.ascending
    }

    pub fn enum_pred(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].pred
    }

    pub fn copylen(&self, id: NodeId) -> u64 {
        self.nodes[id].copylen
    }

    /// `n`-th member of the nicified fundamental sequence of a limit node.
    pub fn fund(&self, id: NodeId, n: usize) -> Option<NodeId> {
        (self.nodes[id].kind == NodeKind::Limit)
            .then(|| self.nodes[id].children.get(n).copied())
            .flatten()
    }

    /// The nice predecessor of a successor node, when materialized.
    pub fn predecessor(&self, id: NodeId) -> Option<NodeId> {
        match self.nodes[id].base.classify() {
            Kind::Successor(p) => self.lookup(&p),
            _ => None,
        }
    }

    /// The nice successor, when materialized.
    pub fn successor(&self, id: NodeId) -> Option<NodeId> {
        self.lookup(&self.nodes[id].base.succ())
    }

    pub fn compare_nodes(&self, a: NodeId, b: NodeId) -> Ordering {
        lex_compare(&self.nodes[a].address, &self.nodes[b].address)
    }

    /// The first `n` nodes in materialization (breadth-first) order.
    pub fn first_materialized(&self, n: usize) -> Vec<NodeId> {
        (0..self.nodes.len().min(n)).collect()
    }

    pub fn to_dump(&self) -> SegmentDump {
        let nodes = self
            .ascending
            .iter()
            .map(|&id| {
                let n = &self.nodes[id];
                SegmentDumpNode {
                    base: n.base.to_string(),
                    address: n.address.iter().map(|a| a.to_string()).collect(),
                    kind: n.kind,
                    copylen: n.copylen,
                    pred: n.pred.map(|p| {
                        self.nodes[p]
                            .address
                            .iter()
                            .map(|a| a.to_string())
                            .collect()
                    }),
                }
            })
            .collect();
        SegmentDump {
            schema: SEGMENT_SCHEMA.to_string(),
            top: self.top_base().to_string(),
            nodes,
        }
    }
}

pub const SEGMENT_SCHEMA: &str = "towerlab.segment/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDumpNode {
    pub base: String,
    pub address: Vec<String>,
    pub kind: NodeKind,
    pub copylen: u64,
    pub pred: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDump {
    pub schema: String,
    pub top: String,
    pub nodes: Vec<SegmentDumpNode>,
}

/// Breadth-first materialization of the enum tree below `alpha`, plus the
/// paths to every notation in `cover`.
pub fn nicify_covering(
    alpha: &Notation,
    m: &Materialize,
    cover: &[Notation],
) -> Result<NiceSegment, NicetyError> {
    let hard_cap = m.max_nodes + cover.len() * 64 + 64;
    let mut tree = EnumTree::new(alpha.clone(), hard_cap);
    let mut queue = std::collections::VecDeque::from([0usize]);
    'bfs: while let Some(id) = queue.pop_front() {
        for n in 0..m.width {
            if tree.len() >= m.max_nodes {
                break 'bfs;
            }
            match tree.child(id, n)? {
                Some(c) => queue.push_back(c),
                None => break,
            }
        }
    }
    for beta in cover {
        tree.locate(beta)?;
    }
    Ok(NiceSegment::from_tree(&tree))
}

pub fn nicify_with(alpha: &Notation, m: &Materialize) -> Result<NiceSegment, NicetyError> {
    nicify_covering(alpha, m, &[])
}

pub fn nicify(alpha: &Notation) -> Result<NiceSegment, NicetyError> {
    nicify_with(alpha, &Materialize::default())
}

/// Appends `next` above `seg`: the new top is `k + 1 + a'` where `k` is the
/// old top and `a'` the top of `next`. Tables of both blocks are unchanged.
pub fn extend_nice(seg: &NiceSegment, next: &NiceSegment) -> NiceSegment {
    let shift = seg.top_base().succ();
    let offset = seg.nodes.len();
    let mut nodes = seg.nodes.clone();
    for n in &next.nodes {
        let base = nat_sum(&shift, &n.base);
        nodes.push(NiceNode {
            kind: NodeKind::of(&base),
            base,
            address: n.address.iter().map(|a| nat_sum(&shift, a)).collect(),
            parent: n.parent.map(|p| p + offset),
            child_index: n.child_index,
            children: n.children.iter().map(|c| c + offset).collect(),
            children_complete: n.children_complete,
            pred: None,
            copylen: 0,
        });
    }
    let mut roots = seg.roots.clone();
    roots.extend(next.roots.iter().map(|r| r + offset));
    NiceSegment::from_parts(nodes, roots)
}

/// A notation system with materialized fundamental sequences, as seen by the
/// niceness checker.
pub trait PathSystem {
    type E: Clone + Eq + std::hash::Hash;
    /// The materialized fragment in increasing order.
    fn elements(&self) -> Vec<Self::E>;
    fn cmp(&self, a: &Self::E, b: &Self::E) -> Ordering;
    fn is_limit(&self, a: &Self::E) -> bool;
    /// Materialized prefix of the fundamental sequence of a limit.
    fn fund(&self, a: &Self::E) -> Vec<Self::E>;
    fn label(&self, a: &Self::E) -> String;
    /// The successor/limit predecessor used by the partition cross-check.
    fn predecessor(&self, a: &Self::E) -> Option<Self::E>;
}

impl PathSystem for NiceSegment {
    type E = NodeId;
    fn elements(&self) -> Vec<NodeId> {
        self.ascending.clone()
    }
    fn cmp(&self, a: &NodeId, b: &NodeId) -> Ordering {
        self.compare_nodes(*a, *b)
    }
    fn is_limit(&self, a: &NodeId) -> bool {
        self.nodes[*a].kind == NodeKind::Limit
    }
    fn fund(&self, a: &NodeId) -> Vec<NodeId> {
        if self.is_limit(a) {
            self.nodes[*a].children.clone()
        } else {
            Vec::new()
        }
    }
    fn label(&self, a: &NodeId) -> String {
        self.nodes[*a].base.to_string()
    }
    fn predecessor(&self, a: &NodeId) -> Option<NodeId> {
        NiceSegment::predecessor(self, *a)
    }
}

/// Raw Cantor normal form notations with their own fundamental sequences,
/// truncated to `width` entries.
#[derive(Clone, Debug)]
pub struct RawCnf {
    elements: Vec<Notation>,
    width: u64,
}

impl RawCnf {
    pub fn new(mut elements: Vec<Notation>, width: u64) -> Self {
        elements.sort();
        elements.dedup();
        RawCnf { elements, width }
    }

    /// Breadth-first closure of `alpha` under the first `width` entries of
    /// each fundamental sequence and under predecessors, up to `max_nodes`.
    pub fn for_alpha(alpha: &Notation, m: &Materialize) -> Self {
        let mut seen: HashSet<Notation> = HashSet::from([alpha.clone()]);
        let mut queue = std::collections::VecDeque::from([alpha.clone()]);
        'bfs: while let Some(a) = queue.pop_front() {
            let next: Vec<Notation> = match a.classify() {
                Kind::Zero => Vec::new(),
                Kind::Successor(p) => vec![p],
                Kind::Limit => (0..m.width as u64)
                    .map(|n| a.fund(n).expect("limit"))
                    .collect(),
            };
            for b in next {
                if seen.len() >= m.max_nodes {
                    break 'bfs;
                }
                if seen.insert(b.clone()) {
                    queue.push_back(b);
                }
            }
        }
        Self::new(seen.into_iter().collect(), m.width as u64)
    }

    pub fn contains(&self, a: &Notation) -> bool {
        self.elements.binary_search(a).is_ok()
    }
}

impl PathSystem for RawCnf {
    type E = Notation;
    fn elements(&self) -> Vec<Notation> {
        self.elements.clone()
    }
    fn cmp(&self, a: &Notation, b: &Notation) -> Ordering {
        compare(a, b)
    }
    fn is_limit(&self, a: &Notation) -> bool {
        a.is_limit()
    }
    fn fund(&self, a: &Notation) -> Vec<Notation> {
        if !a.is_limit() {
            return Vec::new();
        }
        // Paths stay inside the materialized fragment.
        (0..self.width)
            .map(|n| a.fund(n).expect("limit"))
            .filter(|g| self.contains(g))
            .collect()
    }
    fn label(&self, a: &Notation) -> String {
        a.to_string()
    }
    fn predecessor(&self, a: &Notation) -> Option<Notation> {
        match a.classify() {
            Kind::Successor(p) => Some(p),
            _ => None,
        }
    }
}

/// A path between two notations with its minimality verdict.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NotationPath<E> {
    pub steps: Vec<E>,
    pub step_indices: Vec<usize>,
    pub minimal: bool,
}

/// Number of paths from each element down to a fixed `beta`, capped at 2.
struct PathCounts<'a, S: PathSystem> {
    sys: &'a S,
    beta: S::E,
    memo: HashMap<S::E, u8>,
}

impl<'a, S: PathSystem> PathCounts<'a, S> {
    fn new(sys: &'a S, beta: S::E) -> Self {
        PathCounts {
            sys,
            beta,
            memo: HashMap::new(),
        }
    }

    fn count(&mut self, kappa: &S::E) -> u8 {
        if *kappa == self.beta {
            return 1;
        }
        if let Some(&c) = self.memo.get(kappa) {
            return c;
        }
        let mut total = 0u8;
        if self.sys.is_limit(kappa) {
            for g in self.sys.fund(kappa) {
                if self.sys.cmp(&g, &self.beta) != Ordering::Less {
                    total = (total + self.count(&g)).min(2);
                }
            }
        }
        self.memo.insert(kappa.clone(), total);
        total
    }

    /// Some path from `kappa`, taking the first productive index each step.
    fn some_path(&mut self, kappa: &S::E) -> Option<NotationPath<S::E>> {
        if self.count(kappa) == 0 {
            return None;
        }
        let mut steps = vec![kappa.clone()];
        let mut idx = Vec::new();
        let mut minimal = true;
        let mut cur = kappa.clone();
        while cur != self.beta {
            let fund = self.sys.fund(&cur);
            let least = fund
                .iter()
                .position(|g| self.sys.cmp(g, &self.beta) != Ordering::Less);
            let (m, g) = fund
                .iter()
                .enumerate()
                .find(|(_, g)| self.sys.cmp(g, &self.beta) != Ordering::Less && self.count(g) > 0)
                .map(|(m, g)| (m, g.clone()))?;
            minimal &= least == Some(m);
            idx.push(m);
            steps.push(g.clone());
            cur = g;
        }
        Some(NotationPath {
            steps,
            step_indices: idx,
            minimal,
        })
    }
}

/// A path from `lambda` to `beta` within the materialized system, if any.
pub fn path_between<S: PathSystem>(
    sys: &S,
    lambda: &S::E,
    beta: &S::E,
) -> Option<NotationPath<S::E>> {
    if sys.cmp(beta, lambda) != Ordering::Less {
        return None;
    }
    PathCounts::new(sys, beta.clone()).some_path(lambda)
}

/// Number of distinct paths from `lambda` to `beta`, capped at 2.
pub fn count_paths<S: PathSystem>(sys: &S, lambda: &S::E, beta: &S::E) -> u8 {
    PathCounts::new(sys, beta.clone()).count(lambda)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartResult {
    pub pass: bool,
    pub checked: u64,
    pub witnesses: Vec<String>,
}

impl PartResult {
    pub(crate) fn new() -> Self {
        PartResult {
            pass: true,
            checked: 0,
            witnesses: Vec::new(),
        }
    }

    pub(crate) fn fail(&mut self, w: String) {
        self.pass = false;
        if self.witnesses.len() < 16 {
            self.witnesses.push(w);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NiceReport {
    /// At most one path between any two notations, and it is minimal.
    pub unique_minimal_paths: PartResult,
    /// Every notation between `l[0]` and `l` is reachable from `l`.
    pub between_reachable: PartResult,
    /// pred chains terminate.
    pub pred_chains_finite: PartResult,
    /// The descending partition reproduces exactly the pred-less points.
    pub partition_crosscheck: PartResult,
}

impl NiceReport {
    pub fn pass(&self) -> bool {
        self.unique_minimal_paths.pass
            && self.between_reachable.pass
            && self.pred_chains_finite.pass
            && self.partition_crosscheck.pass
    }
}

/// Checks the three niceness conditions on the materialized fragment.
/// `sample_budget` bounds how many target notations are examined; larger
/// fragments are sampled at even spacing.
pub fn is_nice<S: PathSystem>(sys: &S, sample_budget: usize) -> NiceReport {
    let elems = sys.elements();
    let targets: Vec<S::E> = if elems.len() <= sample_budget.max(1) {
        elems.clone()
    } else {
        let step = elems.len() as f64 / sample_budget as f64;
        (0..sample_budget)
            .map(|k| elems[(k as f64 * step) as usize].clone())
            .collect()
    };
    let limits: Vec<S::E> = elems.iter().filter(|e| sys.is_limit(e)).cloned().collect();
    let mut part1 = PartResult::new();
    let mut part2 = PartResult::new();
    // pred(b) = least limit above b whose sequence contains b.
    let mut pred: HashMap<S::E, S::E> = HashMap::new();
    for lam in &limits {
        for g in sys.fund(lam) {
            let better = match pred.get(&g) {
                None => true,
                Some(old) => sys.cmp(lam, old) == Ordering::Less,
            };
            if better {
                pred.insert(g, lam.clone());
            }
        }
    }

    for beta in &targets {
        let mut counts = PathCounts::new(sys, beta.clone());
        for lam in &limits {
            if sys.cmp(beta, lam) != Ordering::Less {
                continue;
            }
            part1.checked += 1;
            let c = counts.count(lam);
            if c > 1 {
                part1.fail(format!(
                    "two paths from {} to {}",
                    sys.label(lam),
                    sys.label(beta)
                ));
            } else if c == 1 {
                let p = counts.some_path(lam).expect("counted path");
                if !p.minimal {
                    part1.fail(format!(
                        "non-minimal path from {} to {}",
                        sys.label(lam),
                        sys.label(beta)
                    ));
                }
            }
            let fund = sys.fund(lam);
            if let Some(first) = fund.first() {
                if sys.cmp(first, beta) != Ordering::Greater {
                    part2.checked += 1;
                    if c == 0 {
                        part2.fail(format!(
                            "no path from {} to {}",
                            sys.label(lam),
                            sys.label(beta)
                        ));
                    }
                }
            }
        }
    }

    let mut part3 = PartResult::new();
    for beta in &elems {
        part3.checked += 1;
        let mut seen = HashSet::new();
        let mut cur = beta.clone();
        while let Some(p) = pred.get(&cur) {
            if !seen.insert(p.clone()) || seen.len() > elems.len() {
                part3.fail(format!(
                    "pred chain from {} does not terminate",
                    sys.label(beta)
                ));
                break;
            }
            cur = p.clone();
        }
    }

    let partition = partition_crosscheck(sys, &elems, &pred);
    NiceReport {
        unique_minimal_paths: part1,
        between_reachable: part2,
        pred_chains_finite: part3,
        partition_crosscheck: partition,
    }
}

/// The descending sequence `k_0 = top`, `k_{i+1}` the predecessor of `k_i`
/// (successor case) or of the least notation reachable from `k_i` (limit
/// case). Within a nice fragment its members are exactly the notations with
/// no pred.
fn partition_crosscheck<S: PathSystem>(
    sys: &S,
    elems: &[S::E],
    pred: &HashMap<S::E, S::E>,
) -> PartResult {
    let mut res = PartResult::new();
    let Some(top) = elems.last().cloned() else {
        return res;
    };
    let in_fragment: HashSet<S::E> = elems.iter().cloned().collect();
    let mut kappas = Vec::new();
    let mut cur = Some(top);
    while let Some(k) = cur {
        if !in_fragment.contains(&k) || kappas.len() > elems.len() {
            break;
        }
        kappas.push(k.clone());
        cur = if sys.is_limit(&k) {
            // least reachable: follow first entries while they are limits
            let mut least = k.clone();
            while let Some(first) = sys.fund(&least).first().cloned() {
                least = first;
                if !sys.is_limit(&least) {
                    break;
                }
            }
            sys.predecessor(&least)
        } else {
            sys.predecessor(&k)
        };
    }
    let kappa_set: HashSet<S::E> = kappas.into_iter().collect();
    for e in elems {
        res.checked += 1;
        let pred_less = !pred.contains_key(e);
        if pred_less != kappa_set.contains(e) {
            res.fail(format!(
                "{}: pred {} but partition says {}",
                sys.label(e),
                if pred_less { "undefined" } else { "defined" },
                if kappa_set.contains(e) {
                    "block head"
                } else {
                    "interior"
                }
            ));
        }
    }
    res
}

/// Tabulated copylen laws over a segment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopylenReport {
    /// `copylen(b) = copylen(pred b) + n` or `0`.
    pub recursion: PartResult,
    /// `l[n] <= b < l` implies `copylen(l[n]) <= copylen(b)`.
    pub between: PartResult,
    /// Strict version for `l[n] < b < l`.
    pub between_strict: PartResult,
    /// The strict claim with `b = l` included; reported, not required.
    pub between_strict_at_top: PartResult,
}

pub fn copylen_laws(seg: &NiceSegment) -> CopylenReport {
    let mut rec = PartResult::new();
    let mut between = PartResult::new();
    let mut strict = PartResult::new();
    let mut at_top = PartResult::new();
    for id in 0..seg.len() {
        rec.checked += 1;
        let expected = match seg.enum_pred(id) {
            None => 0,
            Some(p) => {
                let n = seg
                    .node(p)
                    .children
                    .iter()
                    .position(|&c| c == id)
                    .expect("child");
                seg.copylen(p) + n as u64
            }
        };
        if expected != seg.copylen(id) {
            rec.fail(format!(
                "copylen({}) = {} != {}",
                seg.base(id),
                seg.copylen(id),
                expected
            ));
        }
    }
    let asc = seg.ascending();
    let pos: HashMap<NodeId, usize> = asc.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for &lam in asc {
        if seg.node(lam).kind != NodeKind::Limit {
            continue;
        }
        let lam_pos = pos[&lam];
        for &ln in &seg.node(lam).children {
            let c_ln = seg.copylen(ln);
            for &b in &asc[pos[&ln]..lam_pos] {
                between.checked += 1;
                if c_ln > seg.copylen(b) {
                    between.fail(format!(
                        "copylen({}) > copylen({}) under {}",
                        seg.base(ln),
                        seg.base(b),
                        seg.base(lam)
                    ));
                }
                if b != ln {
                    strict.checked += 1;
                    if c_ln >= seg.copylen(b) {
                        strict.fail(format!(
                            "copylen({}) >= copylen({}) under {}",
                            seg.base(ln),
                            seg.base(b),
                            seg.base(lam)
                        ));
                    }
                }
            }
            at_top.checked += 1;
            if c_ln >= seg.copylen(lam) {
                at_top.fail(format!(
                    "copylen({}) >= copylen({})",
                    seg.base(ln),
                    seg.base(lam)
                ));
            }
        }
    }
    CopylenReport {
        recursion: rec,
        between,
        between_strict: strict,
        between_strict_at_top: at_top,
    }
}

/// `copylen(l[n])` for `n < count` along every limit of a lazily grown tree;
/// used to check divergence beyond the materialized width.
pub fn copylen_along(
    tree: &mut EnumTree,
    lambda: NodeId,
    count: usize,
) -> Result<Vec<u64>, NicetyError> {
    let base_len = {
        let mut c = 0;
        let mut cur = lambda;
        while let Some(p) = tree.parent(cur) {
            if !tree.base(p).is_limit() {
                break;
            }
            c += tree.child_index(cur);
            cur = p;
        }
        c
    };
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        match tree.child(lambda, n)? {
            Some(_) => out.push(base_len + n as u64),
            None => break,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notation::parse_notation;

    fn n(s: &str) -> Notation {
        parse_notation(s).unwrap()
    }

    fn seq(xs: &[&str]) -> Vec<Notation> {
        xs.iter().map(|s| n(s)).collect()
    }

    #[test]
    fn enumseq_examples() {
        let mut t = EnumTree::new(n("w*2"), 10_000);
        assert_eq!(t.enumseq(&n("w")).unwrap(), seq(&["w*2", "w"]));
        assert_eq!(t.enumseq(&n("3")).unwrap(), seq(&["w*2", "w", "3"]));
        let mut t = EnumTree::new(n("5"), 100);
        assert_eq!(t.enumseq(&n("3")).unwrap(), seq(&["5", "3"]));
    }

    #[test]
    fn lex_examples() {
        assert_eq!(
            lex_compare(&seq(&["w*2", "w", "3"]), &seq(&["w*2", "w"])),
            Ordering::Less
        );
        assert_eq!(
            lex_compare(&seq(&["5", "1"]), &seq(&["5", "3"])),
            Ordering::Less
        );
        let a = seq(&["w", "2"]);
        assert_eq!(lex_compare(&a, &a), Ordering::Equal);
    }

    #[test]
    fn copylen_examples() {
        let seg = nicify_covering(&n("w*2"), &Materialize::default(), &[n("3")]).unwrap();
        let top = seg.lookup(&n("w*2")).unwrap();
        let w = seg.lookup(&n("w")).unwrap();
        let three = seg.lookup(&n("3")).unwrap();
        assert_eq!(seg.copylen(top), 0);
        assert_eq!(seg.copylen(w), 0);
        assert_eq!(seg.copylen(three), 3);
        assert_eq!(seg.enum_pred(three), Some(w));
        assert_eq!(seg.enum_pred(top), None);
        let five = nicify(&n("5")).unwrap();
        assert!(five
            .nodes()
            .iter()
            .all(|x| x.copylen == 0 && x.pred.is_none()));
    }

    #[test]
    fn top_children_of_omega_two() {
        let seg = nicify(&n("w*2")).unwrap();
        let top = seg.lookup(&n("w*2")).unwrap();
        let kids: Vec<String> = seg
            .node(top)
            .children
            .iter()
            .take(3)
            .map(|&c| seg.base(c).to_string())
            .collect();
        assert_eq!(kids, ["w", "w+1", "w+2"]);
        let w = seg.lookup(&n("w")).unwrap();
        let kids: Vec<String> = seg
            .node(w)
            .children
            .iter()
            .take(3)
            .map(|&c| seg.base(c).to_string())
            .collect();
        assert_eq!(kids, ["0", "1", "2"]);
    }

    #[test]
    fn raw_paths() {
        let raw = RawCnf::new(vec![n("w^3"), n("w^2"), n("w"), n("w+1")], 8);
        let p = path_between(&raw, &n("w^3"), &n("w")).unwrap();
        assert_eq!(p.steps, seq(&["w^3", "w^2", "w"]));
        assert!(p.minimal);
    }
}
