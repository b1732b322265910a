//! Stagewise finite-injury construction of towers of trees.
//!
//! Each level `T_b` is built from the level above it and from the level at
//! its nice predecessor. The map `theta` from the upper level into `T_b` is
//! the limit of stage approximations. At every stage the construction:
//!
//! 1. pauses while the upper approximation disagrees with the copied segment;
//! 2. drops images of upper strings that left the upper approximation;
//! 3. maps the copied segment by the identity and extends the map with
//!    fresh symbols `pair(k, s)`;
//! 4. acts for genericity at even lengths `2i` by moving an image into the
//!    `i`-th target and resetting everything above it;
//! 5. runs the disagreement (`alt1`) or smallness (`small`) rules;
//! 6. decides membership of strings whose clock has passed.
//!
//! Strings are decided at the first stage after their clock at which they
//! have been seen in the range of the map. Fresh symbols carry the stage that
//! made them, so a string decided out never reappears as an image.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{FiniteFunction, HierarchyError, ModulusHierarchy};
use crate::machine::{run_program, MachineError, OracleApproximation, Program, RunOutcome};
use crate::nicety::{NiceSegment, NodeId, NodeKind, PartResult};
use crate::notation::{cantor_unpair, code_of, Notation};
use crate::trees::{outputs_compatible, stage_pair, FingerString, LevelTree, PhiFamily, TreeDump};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TowerError {
    #[error("construction paused at stage {stage}: upper tree disagrees with the copied segment")]
    Paused { stage: u64 },
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("budgets must be positive")]
    InvalidBudget,
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("treemap undefined at {string} on level {level}")]
    Undefined { level: String, string: FingerString },
    #[error("level tree materialized to depth {have}, need {needed}")]
    InsufficientDepth { needed: usize, have: usize },
    #[error("function has {have} values, need {needed}")]
    ShortFunction { needed: usize, have: usize },
    #[error("notation {0} is not a level of the tower")]
    UnknownLevel(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("level {level}: {source}")]
    Level {
        level: String,
        #[source]
        source: Box<TowerError>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Base,
    /// Padded trees and disagreement-preserving maps.
    Alt1,
    /// Largeness-preserving maps and uniquely small trees.
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub variant: Variant,
    pub stages: u64,
    pub depth: usize,
    /// Hard cap on strings tracked per level.
    pub max_nodes: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            variant: Variant::Base,
            stages: 2000,
            depth: 8,
            max_nodes: 1 << 20,
        }
    }
}

impl BuildConfig {
    fn stride(&self) -> u64 {
        self.stages + 1
    }
}

// ---------------------------------------------------------------------------
// Targets

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    Empty,
    /// All extensions of `prefix`, enumerated from `from_stage` on.
    Prefix {
        from_stage: u64,
        prefix: FingerString,
    },
    /// Strings of length at least `min_len` whose last symbol is congruent
    /// mod `modulus` to some count, seen at a stage so far, of the probes in
    /// the oracle.
    Residue {
        modulus: u64,
        min_len: usize,
        probes: Vec<u64>,
    },
}

/// A stagewise enumerated set of strings, monotone in the stage.
#[derive(Clone, Debug)]
pub struct EnumerableTarget {
    pub kind: TargetKind,
    pub oracle: Option<OracleApproximation>,
}

impl EnumerableTarget {
    pub fn empty() -> Self {
        EnumerableTarget {
            kind: TargetKind::Empty,
            oracle: None,
        }
    }

    pub fn prefix(from_stage: u64, prefix: FingerString) -> Self {
        EnumerableTarget {
            kind: TargetKind::Prefix { from_stage, prefix },
            oracle: None,
        }
    }

    pub fn residue(
        modulus: u64,
        min_len: usize,
        probes: Vec<u64>,
        oracle: Option<OracleApproximation>,
    ) -> Self {
        assert!(
            (1..=64).contains(&modulus),
            "residue modulus must be in 1..=64"
        );
        EnumerableTarget {
            kind: TargetKind::Residue {
                modulus,
                min_len,
                probes,
            },
            oracle,
        }
    }

    fn residue_at(&self, t: u64) -> Result<u64, MachineError> {
        let TargetKind::Residue {
            modulus, probes, ..
        } = &self.kind
        else {
            return Ok(0);
        };
        let mut count = 0;
        if let Some(o) = &self.oracle {
            for &p in probes {
                count += o.membership_at(t, p)? as u64;
            }
        }
        Ok(count % modulus)
    }

    /// The enumeration through stage `s`.
    pub fn snapshot(&self, s: u64) -> Result<TargetSnapshot, MachineError> {
        let mut snap = TargetSnapshot::initial(&self.kind);
        for t in 0..=s {
            snap.advance(self, t)?;
        }
        Ok(snap)
    }
}

/// A target as enumerated through some stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSnapshot {
    kind: TargetKind,
    enumerated: bool,
    residues: u64,
    /// Bumped whenever the enumerated set grows.
    version: u64,
}

impl TargetSnapshot {
    fn initial(kind: &TargetKind) -> Self {
        TargetSnapshot {
            kind: kind.clone(),
            enumerated: false,
            residues: 0,
            version: 0,
        }
    }

    fn advance(&mut self, t: &EnumerableTarget, stage: u64) -> Result<(), MachineError> {
        match &self.kind {
            TargetKind::Empty => {}
            TargetKind::Prefix { from_stage, .. } => {
                if !self.enumerated && stage >= *from_stage {
                    self.enumerated = true;
                    self.version += 1;
                }
            }
            TargetKind::Residue { .. } => {
                let bit = 1u64 << t.residue_at(stage)?;
                if self.residues & bit == 0 {
                    self.residues |= bit;
                    self.version += 1;
                }
            }
        }
        Ok(())
    }

    /// Membership of `tau` itself.
    pub fn contains(&self, tau: &FingerString) -> bool {
        match &self.kind {
            TargetKind::Empty => false,
            TargetKind::Prefix { prefix, .. } => self.enumerated && prefix.is_prefix_of(tau),
            TargetKind::Residue {
                modulus, min_len, ..
            } => {
                tau.len() >= *min_len
                    && !tau.is_empty()
                    && self.residues & (1 << (tau.0[tau.len() - 1] % modulus)) != 0
            }
        }
    }

    /// Some prefix of `tau` is enumerated.
    pub fn meets(&self, tau: &FingerString) -> bool {
        match &self.kind {
            TargetKind::Empty => false,
            TargetKind::Prefix { .. } => self.contains(tau),
            TargetKind::Residue {
                modulus, min_len, ..
            } => tau
                .0
                .iter()
                .enumerate()
                .skip(min_len.saturating_sub(1))
                .any(|(_, v)| self.residues & (1 << (v % modulus)) != 0),
        }
    }
}

// ---------------------------------------------------------------------------
// Maps and logs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjuryCause {
    Genericity,
    Disagreement,
    Smallness,
    ParentChange,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injury {
    pub stage: u64,
    pub cause: InjuryCause,
    /// The domain node that acted or lost its image.
    pub node: FingerString,
    /// Number of images undefined by the action.
    pub reset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaChange {
    pub stage: u64,
    pub node: FingerString,
    pub image: Option<FingerString>,
}

mod pair_list {
    use super::FingerString;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<FingerString, FingerString>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        m.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<FingerString, FingerString>, D::Error> {
        Ok(Vec::<(FingerString, FingerString)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

/// A partial map between level trees with its stage history.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneMap {
    #[serde(with = "pair_list")]
    pub final_map: BTreeMap<FingerString, FingerString>,
    /// Every change of the stage approximation, in order.
    pub changes: Vec<ThetaChange>,
    pub injuries: Vec<Injury>,
}

impl MonotoneMap {
    pub fn get(&self, sigma: &FingerString) -> Option<&FingerString> {
        self.final_map.get(sigma)
    }

    /// The stage-`s` approximation, replayed from the change log.
    pub fn at_stage(&self, s: u64) -> BTreeMap<FingerString, FingerString> {
        let mut m = BTreeMap::new();
        for c in self.changes.iter().take_while(|c| c.stage <= s) {
            match &c.image {
                Some(img) => m.insert(c.node.clone(), img.clone()),
                None => m.remove(&c.node),
            };
        }
        m
    }

    /// `sigma ⊊ tau` both defined implies `theta(sigma) ⊊ theta(tau)`.
    pub fn check_monotone(&self) -> PartResult {
        let mut r = PartResult::new();
        for (tau, img) in &self.final_map {
            for n in 0..tau.len() {
                let sigma = tau.prefix(n);
                if let Some(simg) = self.final_map.get(&sigma) {
                    r.checked += 1;
                    if !(simg.is_prefix_of(img) && simg.len() < img.len()) {
                        r.fail(format!("{sigma} -> {simg} but {tau} -> {img}"));
                    }
                }
            }
        }
        r
    }

    pub fn check_identity_below(&self, copylen: u64) -> PartResult {
        let mut r = PartResult::new();
        for (sigma, img) in self
            .final_map
            .range(..)
            .filter(|(s, _)| (s.len() as u64) < copylen)
        {
            r.checked += 1;
            if sigma != img {
                r.fail(format!("{sigma} -> {img} inside the copied segment"));
            }
        }
        r
    }

    pub fn check_images_in(&self, t: &LevelTree) -> PartResult {
        let mut r = PartResult::new();
        for (sigma, img) in &self.final_map {
            r.checked += 1;
            if !t.contains(img) {
                r.fail(format!("image {img} of {sigma} is not in the tree"));
            }
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipEvent {
    pub stage: u64,
    pub string: FingerString,
    pub member: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub stage: u64,
    pub string: FingerString,
    pub member: bool,
    pub padding: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelLog {
    pub stages: u64,
    pub pauses: Vec<u64>,
    pub decisions: Vec<Decision>,
    /// Changes of the stagewise tree, in stage order.
    pub timeline: Vec<MembershipEvent>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelBuild {
    pub tree: LevelTree,
    pub theta: MonotoneMap,
    pub log: LevelLog,
}

impl LevelBuild {
    /// A level given outright, present from stage 0.
    pub fn fixed(tree: LevelTree) -> Self {
        let timeline = tree
            .nodes()
            .iter()
            .map(|s| MembershipEvent {
                stage: 0,
                string: s.clone(),
                member: true,
            })
            .collect();
        LevelBuild {
            tree,
            theta: MonotoneMap::default(),
            log: LevelLog {
                timeline,
                ..Default::default()
            },
        }
    }

    fn source(&self) -> StageSource<'_> {
        StageSource::Replay {
            tree: &self.tree,
            timeline: &self.log.timeline,
        }
    }
}

/// The upper tree as seen stage by stage.
#[derive(Clone, Copy)]
pub enum StageSource<'a> {
    Static(&'a LevelTree),
    Replay {
        tree: &'a LevelTree,
        timeline: &'a [MembershipEvent],
    },
}

impl<'a> StageSource<'a> {
    fn final_tree(&self) -> &'a LevelTree {
        match self {
            StageSource::Static(t) => t,
            StageSource::Replay { tree, .. } => tree,
        }
    }
}

/// Stagewise values of the hierarchy used by the smallness rule.
#[derive(Clone, Debug)]
pub enum XiProbe {
    Fixed(FiniteFunction),
    Hierarchy {
        h: Arc<ModulusHierarchy>,
        beta: Notation,
    },
}

impl XiProbe {
    pub fn at(&self, x: u64, stage: u64) -> Result<Option<u64>, TowerError> {
        match self {
            XiProbe::Fixed(f) => Ok(f.get(x as usize)),
            XiProbe::Hierarchy { h, beta } => h
                .xi_approx(beta, x, stage)
                .map(Some)
                .map_err(TowerError::from),
        }
    }
}

/// Inputs for one level beyond the two trees.
#[derive(Clone, Default)]
pub struct LevelSpec {
    pub targets: Vec<EnumerableTarget>,
    pub phi: Option<Arc<dyn PhiFamily + Send + Sync>>,
    pub xi: Option<XiProbe>,
    pub oracle: Option<OracleApproximation>,
}

// ---------------------------------------------------------------------------
// build_level

struct Domain {
    strings: Vec<FingerString>,
    index: HashMap<FingerString, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    clock: Vec<u64>,
    /// Indices in order of increasing string code.
    by_code: Vec<usize>,
}

impl Domain {
    fn new(src: &StageSource<'_>, depth: usize) -> Self {
        let mut set: BTreeSet<FingerString> = BTreeSet::new();
        let mut add = |s: &FingerString| {
            if s.len() <= depth {
                for p in s.prefixes() {
                    set.insert(p);
                }
            }
        };
        match src {
            StageSource::Static(t) => t.nodes().iter().for_each(&mut add),
            StageSource::Replay { tree, timeline } => {
                tree.nodes().iter().for_each(&mut add);
                timeline.iter().for_each(|e| add(&e.string));
            }
        }
        let mut strings: Vec<FingerString> = set.into_iter().collect();
        strings.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let index: HashMap<_, _> = strings
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let parent: Vec<Option<usize>> = strings
            .iter()
            .map(|s| s.parent().map(|p| index[&p]))
            .collect();
        let mut children = vec![Vec::new(); strings.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let clock = strings.iter().map(|s| s.clock()).collect();
        let codes: Vec<_> = strings.iter().map(|s| s.code()).collect();
        let mut by_code: Vec<usize> = (0..strings.len()).collect();
        by_code.sort_by(|&a, &b| codes[a].cmp(&codes[b]));
        Domain {
            strings,
            index,
            parent,
            children,
            clock,
            by_code,
        }
    }

    fn len(&self) -> usize {
        self.strings.len()
    }
}

#[derive(Default)]
struct LowerNode {
    refs: u32,
    decided: Option<bool>,
    tracked: bool,
    member: bool,
}

/// The lower tree under construction.
struct Lower {
    nodes: HashMap<FingerString, LowerNode>,
    current: BTreeSet<FingerString>,
    /// Strings in the order they (re)entered the stagewise tree.
    added: Vec<FingerString>,
    pending: BTreeSet<(u64, FingerString)>,
    timeline: Vec<MembershipEvent>,
    decisions: Vec<Decision>,
}

impl Lower {
    fn new() -> Self {
        Lower {
            nodes: HashMap::new(),
            current: BTreeSet::new(),
            added: Vec::new(),
            pending: BTreeSet::new(),
            timeline: Vec::new(),
            decisions: Vec::new(),
        }
    }

    fn refresh(&mut self, p: &FingerString, s: u64) {
        let n = self.nodes.get_mut(p).expect("refreshed node exists");
        let want = n.decided.unwrap_or(n.refs > 0);
        if want == n.member {
            return;
        }
        n.member = want;
        self.timeline.push(MembershipEvent {
            stage: s,
            string: p.clone(),
            member: want,
        });
        if want {
            self.current.insert(p.clone());
            self.added.push(p.clone());
        } else {
            self.current.remove(p);
        }
    }

    fn add_ref(&mut self, img: &FingerString, s: u64) {
        for p in img.prefixes() {
            let n = self.nodes.entry(p.clone()).or_default();
            n.refs += 1;
            if !n.tracked {
                n.tracked = true;
                if n.decided.is_none() {
                    self.pending.insert((p.clock(), p.clone()));
                }
            }
            self.refresh(&p, s);
        }
    }

    fn remove_ref(&mut self, img: &FingerString, s: u64) {
        for p in img.prefixes() {
            let n = self.nodes.get_mut(&p).expect("referenced node exists");
            n.refs -= 1;
            self.refresh(&p, s);
        }
    }

    fn is_member(&self, p: &FingerString) -> bool {
        self.nodes.get(p).is_some_and(|n| n.member)
    }

    fn decide(&mut self, s: u64, pad: bool, copylen: u64) {
        while let Some((c, _)) = self.pending.first() {
            if *c >= s {
                break;
            }
            let (_, p) = self.pending.pop_first().expect("nonempty");
            let n = self.nodes.get_mut(&p).expect("pending node exists");
            if n.decided.is_some() {
                continue;
            }
            let v = n.refs > 0;
            n.decided = Some(v);
            self.refresh(&p, s);
            self.decisions.push(Decision {
                stage: s,
                string: p.clone(),
                member: v,
                padding: false,
            });
            if v && pad && p.len() % 2 == 0 && p.len() as u64 >= copylen {
                for k in 0..2 {
                    let c = p.child(k);
                    let n = self.nodes.entry(c.clone()).or_default();
                    if n.decided.is_none() {
                        n.decided = Some(true);
                        n.tracked = true;
                        self.refresh(&c, s);
                        self.decisions.push(Decision {
                            stage: s,
                            string: c,
                            member: true,
                            padding: true,
                        });
                    }
                }
            }
        }
    }
}

/// Cached outcome of a failed search, valid while the image and the target
/// are unchanged; only strings added since need a look.
#[derive(Clone)]
struct SearchMemo {
    image: FingerString,
    version: u64,
    seen: usize,
}

struct Engine<'a> {
    dom: Domain,
    lower: Lower,
    theta: Vec<Option<FingerString>>,
    map: MonotoneMap,
    cfg: &'a BuildConfig,
    memo: HashMap<usize, SearchMemo>,
}

impl Engine<'_> {
    fn set_theta(&mut self, i: usize, img: Option<FingerString>, s: u64) {
        if self.theta[i] == img {
            return;
        }
        if let Some(old) = self.theta[i].take() {
            self.lower.remove_ref(&old, s);
        }
        if let Some(new) = &img {
            self.lower.add_ref(new, s);
        }
        self.map.changes.push(ThetaChange {
            stage: s,
            node: self.dom.strings[i].clone(),
            image: img.clone(),
        });
        self.theta[i] = img;
    }

    /// Undefines every image strictly above `i`; returns how many.
    fn reset_above(&mut self, i: usize, s: u64) -> usize {
        let mut count = 0;
        let mut stack: Vec<usize> = self.dom.children[i].clone();
        while let Some(j) = stack.pop() {
            if self.theta[j].is_some() {
                self.set_theta(j, None, s);
                count += 1;
            }
            stack.extend(self.dom.children[j].iter().copied());
        }
        count
    }

    fn undefine_subtree(&mut self, i: usize, s: u64) -> usize {
        let mut count = self.reset_above(i, s);
        if self.theta[i].is_some() {
            self.set_theta(i, None, s);
            count += 1;
        }
        count
    }

    fn injure(&mut self, s: u64, cause: InjuryCause, i: usize, reset: usize) {
        self.map.injuries.push(Injury {
            stage: s,
            cause,
            node: self.dom.strings[i].clone(),
            reset,
        });
    }

    fn fresh_symbol(&self, i: usize, parent_img: &FingerString, s: u64) -> Result<u64, TowerError> {
        let k = *self.dom.strings[i].0.last().expect("nonempty");
        let pair = stage_pair(k, s, self.cfg.stride()).ok_or_else(|| {
            TowerError::BudgetExhausted(format!("symbol pair({k}, {s}) overflows"))
        })?;
        match self.cfg.variant {
            Variant::Small => parent_img
                .last()
                .unwrap_or(0)
                .checked_add(pair)
                .ok_or_else(|| TowerError::BudgetExhausted("symbol overflow".into())),
            _ => Ok(pair),
        }
    }

    /// Largeness filter on candidate images for node `i`.
    fn large_enough(&self, i: usize, img: &FingerString, tau: &FingerString) -> bool {
        if self.cfg.variant != Variant::Small {
            return true;
        }
        let floor = self.dom.strings[i].last().unwrap_or(0);
        tau.is_non_decreasing() && tau.0[img.len()..].iter().all(|&v| v >= floor)
    }

    fn search_target(
        &mut self,
        i: usize,
        img: &FingerString,
        snap: &TargetSnapshot,
    ) -> Option<FingerString> {
        let fits = |e: &Self, tau: &FingerString| {
            tau.len() > img.len()
                && img.is_prefix_of(tau)
                && e.lower.is_member(tau)
                && snap.contains(tau)
                && e.large_enough(i, img, tau)
        };
        let memo = self
            .memo
            .get(&i)
            .filter(|m| &m.image == img && m.version == snap.version);
        let found = match memo {
            Some(m) => self.lower.added[m.seen..]
                .iter()
                .filter(|t| fits(self, t))
                .min()
                .cloned(),
            None => self
                .lower
                .current
                .range(img.clone()..)
                .take_while(|t| img.is_prefix_of(t))
                .find(|t| fits(self, t))
                .cloned(),
        };
        if found.is_none() {
            self.memo.insert(
                i,
                SearchMemo {
                    image: img.clone(),
                    version: snap.version,
                    seen: self.lower.added.len(),
                },
            );
        }
        found
    }

    fn disagreement_pair(
        &self,
        img: &FingerString,
        phi: &dyn PhiFamily,
        idx: u64,
        s: u64,
    ) -> Option<(FingerString, FingerString)> {
        let exts: Vec<(&FingerString, Vec<u64>)> = self
            .lower
            .current
            .range(img.clone()..)
            .take_while(|t| img.is_prefix_of(t))
            .filter(|t| t.len() > img.len())
            .map(|t| (t, phi.output(idx, t, s)))
            .collect();
        let (lt, lo) = exts.iter().max_by_key(|(_, o)| o.len())?;
        let (ot, _) = exts.iter().find(|(_, o)| !outputs_compatible(o, lo))?;
        let (a, b) = if ot < lt { (ot, lt) } else { (lt, ot) };
        Some(((*a).clone(), (*b).clone()))
    }
}

/// Builds one level from the stagewise upper tree and the frozen tree at the
/// nice predecessor, replaying the stage rules up to the configured budget.
#[allow(clippy::needless_range_loop)]
pub fn build_level(
    above: StageSource<'_>,
    pred: &LevelTree,
    spec: &LevelSpec,
    copylen: u64,
    cfg: &BuildConfig,
) -> Result<LevelBuild, TowerError> {
    if cfg.stages == 0 || cfg.depth == 0 {
        return Err(TowerError::InvalidBudget);
    }
    let phi = match cfg.variant {
        Variant::Alt1 => Some(
            spec.phi
                .as_deref()
                .ok_or(TowerError::MissingInput("phi family"))?,
        ),
        _ => None,
    };
    let xi = match cfg.variant {
        Variant::Small => Some(
            spec.xi
                .as_ref()
                .ok_or(TowerError::MissingInput("xi probe"))?,
        ),
        _ => None,
    };
    let dom = Domain::new(&above, cfg.depth);
    let n = dom.len();

    let mut events: Vec<(u64, usize, bool)> = match above {
        StageSource::Static(t) => t
            .nodes()
            .iter()
            .filter_map(|s| dom.index.get(s).map(|&i| (0, i, true)))
            .collect(),
        StageSource::Replay { timeline, .. } => timeline
            .iter()
            .filter_map(|e| dom.index.get(&e.string).map(|&i| (e.stage, i, e.member)))
            .collect(),
    };
    events.sort_by_key(|e| e.0);

    let copied: BTreeSet<FingerString> = pred
        .nodes()
        .iter()
        .filter(|s| s.len() as u64 <= copylen)
        .cloned()
        .collect();
    let short: Vec<usize> = (0..n)
        .filter(|&i| dom.strings[i].len() as u64 <= copylen)
        .collect();

    let mut e = Engine {
        theta: vec![None; n],
        dom,
        lower: Lower::new(),
        map: MonotoneMap::default(),
        cfg,
        memo: HashMap::new(),
    };
    let mut snaps: Vec<TargetSnapshot> = spec
        .targets
        .iter()
        .map(|t| TargetSnapshot::initial(&t.kind))
        .collect();
    for (snap, t) in snaps.iter_mut().zip(&spec.targets) {
        snap.advance(t, 0)?;
    }
    let mut hat = vec![false; n];
    let mut ev = 0;
    let mut pauses = Vec::new();

    for s in 1..=cfg.stages {
        while ev < events.len() && events[ev].0 <= s {
            hat[events[ev].1] = events[ev].2;
            ev += 1;
        }
        for (snap, t) in snaps.iter_mut().zip(&spec.targets) {
            snap.advance(t, s)?;
        }

        let seen = short.iter().filter(|&&i| hat[i]).count();
        let agree = seen == copied.len()
            && short
                .iter()
                .filter(|&&i| hat[i])
                .all(|&i| copied.contains(&e.dom.strings[i]));
        if !agree {
            pauses.push(s);
            continue;
        }

        // Images survive only while the whole domain string stays upstairs.
        for i in 0..n {
            if e.theta[i].is_none() {
                continue;
            }
            let parent_ok = e.dom.parent[i].is_none_or(|p| e.theta[p].is_some());
            if !hat[i] || !parent_ok {
                let reset = e.undefine_subtree(i, s);
                e.injure(s, InjuryCause::ParentChange, i, reset);
            }
        }

        for i in 0..n {
            if !hat[i] || e.theta[i].is_some() {
                continue;
            }
            let parent_img = match e.dom.parent[i] {
                None => None,
                Some(p) => match &e.theta[p] {
                    Some(img) => Some(img.clone()),
                    None => continue,
                },
            };
            let len = e.dom.strings[i].len() as u64;
            if len <= copylen {
                let own = e.dom.strings[i].clone();
                e.set_theta(i, Some(own), s);
            } else if e.dom.clock[i] <= s {
                let pimg = parent_img.expect("nonempty strings have parents");
                let sym = e.fresh_symbol(i, &pimg, s)?;
                e.set_theta(i, Some(pimg.child(sym)), s);
            }
        }

        for i in 0..n {
            let len = e.dom.strings[i].len();
            if !len.is_multiple_of(2) || (len as u64) < copylen || len / 2 >= snaps.len() {
                continue;
            }
            let Some(img) = e.theta[i].clone() else {
                continue;
            };
            let snap = &snaps[len / 2];
            if snap.meets(&img) {
                continue;
            }
            if let Some(tau) = e.search_target(i, &img, snap) {
                let reset = e.reset_above(i, s);
                e.set_theta(i, Some(tau), s);
                e.injure(s, InjuryCause::Genericity, i, reset);
            }
        }

        if let Some(phi) = phi {
            for i in 0..n {
                let len = e.dom.strings[i].len();
                if !len.is_multiple_of(2) || (len as u64) < copylen {
                    continue;
                }
                let sigma = &e.dom.strings[i];
                let (Some(&c0), Some(&c1)) = (
                    e.dom.index.get(&sigma.child(0)),
                    e.dom.index.get(&sigma.child(1)),
                ) else {
                    continue;
                };
                let (Some(img), Some(t0), Some(t1)) = (&e.theta[i], &e.theta[c0], &e.theta[c1])
                else {
                    continue;
                };
                let idx = len as u64 / 2;
                if !outputs_compatible(&phi.output(idx, t0, s), &phi.output(idx, t1, s)) {
                    continue;
                }
                let img = img.clone();
                if let Some((a, b)) = e.disagreement_pair(&img, phi, idx, s) {
                    let reset = e.reset_above(i, s);
                    e.set_theta(c0, Some(a), s);
                    e.set_theta(c1, Some(b), s);
                    e.injure(s, InjuryCause::Disagreement, i, reset);
                }
            }
        }

        if let Some(xi) = xi {
            let max_len = e.theta.iter().flatten().map(|t| t.len()).max().unwrap_or(0);
            let bounds: Vec<Option<u64>> = (0..max_len as u64)
                .map(|x| xi.at(x, s))
                .collect::<Result<_, _>>()?;
            let mut slots: HashMap<usize, FingerString> = HashMap::new();
            for k in 0..n {
                let i = e.dom.by_code[k];
                let Some(img) = e.theta[i].clone() else {
                    continue;
                };
                let small: Vec<usize> = (0..img.len())
                    .filter(|&x| bounds[x].is_some_and(|b| img.0[x] <= b))
                    .collect();
                let clash = small
                    .iter()
                    .any(|&x| slots.get(&x).is_some_and(|p| *p != img.prefix(x + 1)));
                if clash && e.dom.strings[i].len() as u64 > copylen {
                    let reset = e.undefine_subtree(i, s);
                    e.injure(s, InjuryCause::Smallness, i, reset);
                } else {
                    for x in small {
                        slots.entry(x).or_insert_with(|| img.prefix(x + 1));
                    }
                }
            }
        }

        e.lower.decide(s, cfg.variant == Variant::Alt1, copylen);
        if e.lower.nodes.len() > cfg.max_nodes {
            return Err(TowerError::BudgetExhausted(format!(
                "more than {} strings at stage {s}",
                cfg.max_nodes
            )));
        }
    }
    if pauses.last() == Some(&cfg.stages) {
        return Err(TowerError::Paused { stage: cfg.stages });
    }

    let upper = above.final_tree();
    let mut keep: BTreeSet<FingerString> = BTreeSet::new();
    for i in 0..n {
        if upper.is_extendable(&e.dom.strings[i]) {
            if let Some(img) = &e.theta[i] {
                keep.extend(img.prefixes());
            }
        }
    }
    let killed: BTreeSet<FingerString> = e
        .lower
        .current
        .iter()
        .filter(|p| !keep.contains(*p) && p.parent().is_none_or(|q| keep.contains(&q)))
        .cloned()
        .collect();
    let tree = LevelTree::with_killed(e.lower.current.iter().cloned(), killed, cfg.depth);
    e.map.final_map = (0..n)
        .filter_map(|i| {
            e.theta[i]
                .clone()
                .map(|img| (e.dom.strings[i].clone(), img))
        })
        .collect();
    Ok(LevelBuild {
        tree,
        theta: e.map,
        log: LevelLog {
            stages: cfg.stages,
            pauses,
            decisions: e.lower.decisions,
            timeline: e.lower.timeline,
        },
    })
}

// ---------------------------------------------------------------------------
// Towers

pub struct Level {
    pub node: NodeId,
    pub notation: Notation,
    /// The level this one was built from; `None` at the top.
    pub above: Option<NodeId>,
    pub pred: Option<NodeId>,
    pub copylen: u64,
    pub build: LevelBuild,
    pub spec: LevelSpec,
}

impl Level {
    pub fn tree(&self) -> &LevelTree {
        &self.build.tree
    }

    /// The map from the level above into this one.
    pub fn theta(&self) -> &MonotoneMap {
        &self.build.theta
    }
}

pub struct Tower {
    pub segment: Arc<NiceSegment>,
    pub levels: BTreeMap<NodeId, Level>,
    pub config: BuildConfig,
}

impl Tower {
    pub fn top(&self) -> NodeId {
        *self
            .segment
            .ascending()
            .last()
            .expect("segment is nonempty")
    }

    pub fn bottom(&self) -> NodeId {
        self.segment.ascending()[0]
    }

    pub fn level(&self, id: NodeId) -> &Level {
        &self.levels[&id]
    }

    pub fn node_of(&self, beta: &Notation) -> Result<NodeId, TowerError> {
        self.segment
            .lookup(beta)
            .ok_or_else(|| TowerError::UnknownLevel(beta.to_string()))
    }

    /// Levels from the top down.
    pub fn descending(&self) -> impl Iterator<Item = &Level> + '_ {
        self.segment
            .ascending()
            .iter()
            .rev()
            .map(move |id| &self.levels[id])
    }

    /// The level built from `id`, one step down in segment order.
    pub fn below(&self, id: NodeId) -> Option<NodeId> {
        let asc = self.segment.ascending();
        let pos = asc.iter().position(|&x| x == id)?;
        pos.checked_sub(1).map(|p| asc[p])
    }
}

/// Builds every level of the segment top-down. The top level is the seed;
/// each lower level is built from the next level up in segment order and
/// from its nice predecessor, clamped to the top when undefined.
pub fn build_tower(
    segment: Arc<NiceSegment>,
    seed: &LevelTree,
    specs: &dyn Fn(&Notation) -> LevelSpec,
    cfg: &BuildConfig,
) -> Result<Tower, TowerError> {
    let asc = segment.ascending().to_vec();
    let top = *asc.last().ok_or(TowerError::InvalidBudget)?;
    let seed = LevelTree::with_killed(
        seed.nodes().iter().cloned(),
        seed.killed().clone(),
        cfg.depth,
    );
    let mut levels = BTreeMap::new();
    let top_base = segment.base(top).clone();
    levels.insert(
        top,
        Level {
            node: top,
            notation: top_base.clone(),
            above: None,
            pred: None,
            copylen: segment.copylen(top),
            build: LevelBuild::fixed(seed),
            spec: specs(&top_base),
        },
    );
    for pos in (0..asc.len() - 1).rev() {
        let id = asc[pos];
        let above = asc[pos + 1];
        let pred = segment.enum_pred(id).unwrap_or(top);
        let copylen = segment.copylen(id);
        let notation = segment.base(id).clone();
        let spec = specs(&notation);
        let up: &Level = &levels[&above];
        let pred_tree = &levels[&pred].build.tree;
        let build =
            build_level(up.build.source(), pred_tree, &spec, copylen, cfg).map_err(|e| {
                TowerError::Level {
                    level: notation.to_string(),
                    source: Box::new(e),
                }
            })?;
        levels.insert(
            id,
            Level {
                node: id,
                notation,
                above: Some(above),
                pred: Some(pred),
                copylen,
                build,
                spec,
            },
        );
    }
    Ok(Tower {
        segment,
        levels,
        config: *cfg,
    })
}

fn level_name(tw: &Tower, id: NodeId) -> String {
    tw.segment.base(id).to_string()
}

/// Composite map from level `from` down to level `to`.
pub fn treemap(
    tw: &Tower,
    from: NodeId,
    to: NodeId,
    sigma: &FingerString,
) -> Result<FingerString, TowerError> {
    let mut cur = from;
    let mut s = sigma.clone();
    loop {
        if cur == to {
            return Ok(s);
        }
        if tw.segment.compare_nodes(cur, to) == std::cmp::Ordering::Less {
            return Err(TowerError::Undefined {
                level: level_name(tw, cur),
                string: s,
            });
        }
        if tw.segment.node(cur).kind == NodeKind::Limit {
            let delegate = (s.len() + 1..)
                .map_while(|l| tw.segment.fund(cur, l))
                .find(|&c| tw.segment.compare_nodes(c, to) != std::cmp::Ordering::Less);
            if let Some(c) = delegate.filter(|c| tw.levels[c].tree().contains(&s)) {
                cur = c;
                continue;
            }
        }
        let below = tw.below(cur).ok_or_else(|| TowerError::Undefined {
            level: level_name(tw, cur),
            string: s.clone(),
        })?;
        let img =
            tw.levels[&below]
                .theta()
                .get(&s)
                .cloned()
                .ok_or_else(|| TowerError::Undefined {
                    level: level_name(tw, below),
                    string: s.clone(),
                })?;
        s = img;
        cur = below;
    }
}

/// The bound `l(n)` on image lengths at the bottom for strings of length `n`
/// of level `beta` whose images `h` majorizes.
pub fn preimage_bound(
    tw: &Tower,
    beta: NodeId,
    h: &FiniteFunction,
    n: usize,
) -> Result<usize, TowerError> {
    let t = tw.levels[&beta].tree();
    let bottom = tw.bottom();
    if n > t.depth() {
        return Err(TowerError::InsufficientDepth {
            needed: n,
            have: t.depth(),
        });
    }
    let root = FingerString::empty();
    let mut l = treemap(tw, beta, bottom, &root)?.len();
    let mut level = vec![root];
    for _ in 0..n {
        let need = l + 2;
        if h.len() < need {
            return Err(TowerError::ShortFunction {
                needed: need,
                have: h.len(),
            });
        }
        let cap = h.values()[..need].iter().copied().max().unwrap_or(0);
        let next: Vec<FingerString> = level
            .iter()
            .flat_map(|s| {
                t.children(s)
                    .filter(|c| c.last().is_some_and(|i| i <= cap))
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut best = l;
        for c in &next {
            if let Ok(img) = treemap(tw, beta, bottom, c) {
                best = best.max(img.len());
            }
        }
        l = best;
        level = next;
    }
    Ok(l)
}

/// `h(l)` with `l` above every bottom image length of strings of length at
/// most `x + 1`. When `h` majorizes two bottom paths that first differ at
/// `y < x`, this bounds the hierarchy one above `beta` at `x`.
pub fn recover_jump_bound(
    tw: &Tower,
    beta: NodeId,
    h: &FiniteFunction,
    y: usize,
    x: usize,
) -> Result<u64, TowerError> {
    if x <= y {
        return Err(TowerError::Precondition(format!(
            "need x > y, got x={x}, y={y}"
        )));
    }
    let mut l = 0;
    for n in 0..=x + 1 {
        l = l.max(preimage_bound(tw, beta, h, n)?);
    }
    let l = l + 1;
    h.get(l).ok_or(TowerError::ShortFunction {
        needed: l + 1,
        have: h.len(),
    })
}

/// The image of a top-level prefix at the bottom, trimmed to `depth`.
pub fn extract_root(
    tw: &Tower,
    top_path: &FiniteFunction,
    depth: usize,
) -> Result<FiniteFunction, TowerError> {
    let img = treemap(
        tw,
        tw.top(),
        tw.bottom(),
        &FingerString(top_path.values().to_vec()),
    )?;
    Ok(FiniteFunction(img.prefix(depth).0))
}

// ---------------------------------------------------------------------------
// Audits

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EagerReport {
    pub pairs: u64,
    pub decided: u64,
    /// `(path, target index)` pairs neither met nor refuted.
    pub undecided: Vec<(FingerString, usize)>,
}

impl EagerReport {
    pub fn fraction(&self) -> f64 {
        if self.pairs == 0 {
            1.0
        } else {
            self.decided as f64 / self.pairs as f64
        }
    }
}

/// Paths are the maximal extendable strings. A pair is decided when the path
/// meets the target or nothing in the whole tree extending its prefix at the
/// tree depth is enumerated.
pub fn audit_eager(
    t: &LevelTree,
    targets: &[EnumerableTarget],
    stage: u64,
) -> Result<EagerReport, TowerError> {
    let snaps: Vec<TargetSnapshot> = targets
        .iter()
        .map(|x| x.snapshot(stage))
        .collect::<Result<_, _>>()?;
    let ext = t.extendable_nodes();
    let paths: Vec<&FingerString> = ext
        .iter()
        .filter(|f| !t.children(f).any(|c| ext.contains(c)))
        .collect();
    let mut rep = EagerReport::default();
    for f in paths {
        let sigma = f.prefix(t.depth());
        for (j, snap) in snaps.iter().enumerate() {
            rep.pairs += 1;
            let refuted = || !t.extensions(&sigma).any(|tau| snap.contains(tau));
            if snap.meets(f) || (!snap.contains(&sigma) && refuted()) {
                rep.decided += 1;
            } else {
                rep.undecided.push((f.clone(), j));
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeomorphismReport {
    /// Extendable upper strings map to extendable lower strings.
    pub into: PartResult,
    /// Every extendable lower string lies below an image.
    pub onto: PartResult,
}

impl HomeomorphismReport {
    pub fn mismatches(&self) -> usize {
        (!self.into.pass) as usize * self.into.witnesses.len().max(1)
            + (!self.onto.pass) as usize * self.onto.witnesses.len().max(1)
    }
}

pub fn homeomorphism_check(
    upper: &LevelTree,
    lower: &LevelTree,
    theta: &MonotoneMap,
    depth: usize,
) -> HomeomorphismReport {
    let mut into = PartResult::new();
    let mut images = BTreeSet::new();
    for sigma in upper
        .extendable_nodes()
        .into_iter()
        .filter(|s| s.len() <= depth)
    {
        into.checked += 1;
        match theta.get(&sigma) {
            Some(img) if lower.is_extendable(img) => {
                if sigma.len() == depth.min(upper.depth()) {
                    images.extend(img.prefixes());
                }
            }
            Some(img) => into.fail(format!("{sigma} -> {img}, which is not extendable")),
            None => into.fail(format!("{sigma} has no image")),
        }
    }
    let mut onto = PartResult::new();
    for rho in lower
        .extendable_nodes()
        .into_iter()
        .filter(|s| s.len() <= depth)
    {
        onto.checked += 1;
        if !images.contains(&rho) {
            onto.fail(format!("{rho} is below no image"));
        }
    }
    HomeomorphismReport { into, onto }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerAudit {
    pub copying: PartResult,
    pub monotone: PartResult,
    pub identity: PartResult,
    pub images_in_tree: PartResult,
    pub permanent_decisions: PartResult,
    pub injury_bound: PartResult,
}

impl TowerAudit {
    pub fn pass(&self) -> bool {
        self.copying.pass
            && self.monotone.pass
            && self.identity.pass
            && self.images_in_tree.pass
            && self.permanent_decisions.pass
            && self.injury_bound.pass
    }
}

fn merge(into: &mut PartResult, level: &str, part: PartResult) {
    into.checked += part.checked;
    for w in part.witnesses {
        into.fail(format!("{level}: {w}"));
    }
    if !part.pass {
        into.pass = false;
    }
}

/// Stage after which `sigma` and all its prefixes stay put upstairs.
fn settle_stages(timeline: &[MembershipEvent]) -> HashMap<&FingerString, u64> {
    let mut last = HashMap::new();
    for e in timeline {
        last.insert(&e.string, e.stage);
    }
    last
}

pub fn audit_tower(tw: &Tower) -> TowerAudit {
    let mut a = TowerAudit::default();
    for part in [
        &mut a.copying,
        &mut a.monotone,
        &mut a.identity,
        &mut a.images_in_tree,
        &mut a.permanent_decisions,
        &mut a.injury_bound,
    ] {
        *part = PartResult::new();
    }
    for lvl in tw.descending() {
        let (Some(above), Some(pred)) = (lvl.above, lvl.pred) else {
            continue;
        };
        let name = lvl.notation.to_string();
        let t = lvl.tree();

        let mut copy = PartResult::new();
        let mine = t.restrict(lvl.copylen as usize);
        let theirs = tw.levels[&pred].tree().restrict(lvl.copylen as usize);
        copy.checked += 1;
        if mine != theirs {
            let diff = mine
                .symmetric_difference(&theirs)
                .next()
                .cloned()
                .unwrap_or_default();
            copy.fail(format!("copied segment differs at {diff}"));
        }
        merge(&mut a.copying, &name, copy);

        merge(&mut a.monotone, &name, lvl.theta().check_monotone());
        merge(
            &mut a.identity,
            &name,
            lvl.theta().check_identity_below(lvl.copylen),
        );
        merge(&mut a.images_in_tree, &name, lvl.theta().check_images_in(t));

        let mut perm = PartResult::new();
        let decided: HashMap<&FingerString, &Decision> = lvl
            .build
            .log
            .decisions
            .iter()
            .map(|d| (&d.string, d))
            .collect();
        for ev in &lvl.build.log.timeline {
            if let Some(d) = decided.get(&ev.string) {
                if ev.stage > d.stage {
                    perm.fail(format!(
                        "{} changed at stage {} after its decision",
                        ev.string, ev.stage
                    ));
                }
            }
        }
        for d in &lvl.build.log.decisions {
            perm.checked += 1;
            if t.contains(&d.string) != d.member {
                perm.fail(format!(
                    "{} decided {} but ended otherwise",
                    d.string, d.member
                ));
            }
        }
        merge(&mut a.permanent_decisions, &name, perm);

        let mut bound = PartResult::new();
        let settle = settle_stages(&tw.levels[&above].build.log.timeline);
        let mut acts: HashMap<&FingerString, Vec<u64>> = HashMap::new();
        for inj in &lvl.theta().injuries {
            if inj.cause == InjuryCause::Genericity {
                acts.entry(&inj.node).or_default().push(inj.stage);
            }
        }
        for sigma in lvl.theta().final_map.keys() {
            bound.checked += 1;
            let t0 = sigma
                .prefixes()
                .filter_map(|p| settle.get(&p).copied())
                .max()
                .unwrap_or(0);
            let count: usize = sigma
                .prefixes()
                .filter_map(|p| acts.get(&p))
                .map(|v| v.iter().filter(|&&st| st > t0).count())
                .sum();
            let k = sigma.len().div_ceil(2) as u32;
            if count > 1usize << k {
                bound.fail(format!(
                    "{sigma} injured {count} times, bound {}",
                    1u64 << k
                ));
            }
        }
        merge(&mut a.injury_bound, &name, bound);
    }
    a
}

// ---------------------------------------------------------------------------
// Independent families

/// Values at positions that a tree has enumerated out of its complement.
pub trait ExclusionSpec {
    fn excluded(&self, x: usize, v: u64, stage: u64) -> bool;
}

/// Excludes nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct OpenSpec;

impl ExclusionSpec for OpenSpec {
    fn excluded(&self, _: usize, _: u64, _: u64) -> bool {
        false
    }
}

/// From `from_stage` on, erases every value below `below` at `position`.
#[derive(Clone, Copy, Debug)]
pub struct ErasingSpec {
    pub position: usize,
    pub from_stage: u64,
    pub below: u64,
}

impl ExclusionSpec for ErasingSpec {
    fn excluded(&self, x: usize, v: u64, stage: u64) -> bool {
        x == self.position && stage >= self.from_stage && v < self.below
    }
}

#[derive(Clone, Debug)]
pub struct FamilyConfig {
    /// Number of requirements attempted, in priority order.
    pub requirements: usize,
    pub stages: u64,
    /// Length of each function prefix.
    pub length: usize,
    pub step_budget: u64,
    /// Stand-in for the common oracle joined to the other functions.
    pub oracle: Option<OracleApproximation>,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            requirements: 6,
            stages: 64,
            length: 16,
            step_budget: 256,
            oracle: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Computation {
    pub witness: usize,
    pub output: u64,
    pub value: u64,
    /// Queried `(function, position, value)` triples answered yes or no.
    pub uses: Vec<(usize, usize, u64)>,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementRecord {
    pub index: usize,
    pub function: usize,
    pub program: u64,
    pub met: bool,
    pub certificate: Option<Computation>,
    pub actions: u64,
    pub injuries: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementLog {
    pub stages: u64,
    pub met: usize,
    pub unmet: usize,
    pub requirements: Vec<RequirementRecord>,
}

struct Family<'a> {
    g: Vec<Vec<u64>>,
    high: Vec<Vec<u64>>,
    cfg: &'a FamilyConfig,
}

impl Family<'_> {
    /// Runs program `e` on `x` with oracle the join of every function but
    /// `j` together with the common oracle.
    fn run(&self, j: usize, e: u64, x: usize, s: u64) -> Result<Option<Computation>, TowerError> {
        let k = self.g.len();
        let others: Vec<usize> = (0..k).filter(|&i| i != j).collect();
        let uses = std::cell::RefCell::new(Vec::new());
        let err = std::cell::RefCell::new(None);
        let oracle = |y: u64| -> bool {
            let (a, rest) = cantor_unpair(y);
            if (a as usize) < others.len() {
                let i = others[a as usize];
                let (pos, v) = cantor_unpair(rest);
                let pos = pos as usize;
                if pos < self.cfg.length {
                    uses.borrow_mut().push((i, pos, self.g[i][pos]));
                    return self.g[i][pos] == v;
                }
                false
            } else if a as usize == others.len() {
                match &self.cfg.oracle {
                    Some(o) => o.membership_at(s, rest).unwrap_or_else(|e| {
                        *err.borrow_mut() = Some(e);
                        false
                    }),
                    None => false,
                }
            } else {
                false
            }
        };
        let out = run_program(
            &Program::from_index(e),
            &oracle,
            x as u64,
            self.cfg.step_budget.min(s.max(1)),
        );
        if let Some(e) = err.into_inner() {
            return Err(e.into());
        }
        Ok(match out {
            RunOutcome::Halted { output, steps } => Some(Computation {
                witness: x,
                output,
                value: self.g[j][x],
                uses: uses.into_inner(),
                steps,
            }),
            RunOutcome::Exhausted => None,
        })
    }

    fn still_holds(&self, c: &Computation, j: usize) -> bool {
        self.g[j][c.witness] == c.value && c.uses.iter().all(|&(i, p, v)| self.g[i][p] == v)
    }

    fn fresh(&mut self, spec: &dyn ExclusionSpec, j: usize, x: usize, s: u64) -> u64 {
        let mut v = self.high[j][x] + 1;
        while spec.excluded(x, v, s) {
            v += 1;
        }
        self.high[j][x] = v;
        self.g[j][x] = v;
        v
    }
}

/// Finite-injury construction of `k` function prefixes, none computable from
/// the others joined with the common oracle. Requirement `r` makes function
/// `r mod k` differ from program `r / k`.
pub fn build_independent_family(
    k: usize,
    specs: &[&dyn ExclusionSpec],
    cfg: &FamilyConfig,
) -> Result<(Vec<FiniteFunction>, RequirementLog), TowerError> {
    if k < 2 || specs.len() != k {
        return Err(TowerError::MissingInput("k >= 2 exclusion specs"));
    }
    let mut fam = Family {
        g: vec![vec![0; cfg.length]; k],
        high: vec![vec![0; cfg.length]; k],
        cfg,
    };
    for (j, spec) in specs.iter().enumerate() {
        for x in 0..cfg.length {
            let mut v = 0;
            while spec.excluded(x, v, 0) {
                v += 1;
            }
            fam.g[j][x] = v;
            fam.high[j][x] = v;
        }
    }
    let m = cfg.requirements;
    let mut recs: Vec<RequirementRecord> = (0..m)
        .map(|r| RequirementRecord {
            index: r,
            function: r % k,
            program: (r / k) as u64,
            met: false,
            certificate: None,
            actions: 0,
            injuries: 0,
        })
        .collect();
    let mut witness: Vec<Option<usize>> = vec![None; m];

    for s in 1..=cfg.stages {
        for (j, spec) in specs.iter().enumerate() {
            for x in 0..cfg.length {
                if spec.excluded(x, fam.g[j][x], s) {
                    fam.fresh(*spec, j, x, s);
                }
            }
        }
        let mut restrained: BTreeSet<(usize, usize)> = BTreeSet::new();
        for r in 0..m {
            let j = r % k;
            if let Some(c) = &recs[r].certificate {
                if fam.still_holds(c, j) {
                    restrained.insert((j, c.witness));
                    restrained.extend(c.uses.iter().map(|&(i, p, _)| (i, p)));
                    continue;
                }
                recs[r].certificate = None;
                recs[r].injuries += 1;
            }
            let taken: BTreeSet<usize> = (0..m)
                .filter(|&q| q != r && q % k == j)
                .filter_map(|q| witness[q])
                .collect();
            let x = match witness[r].filter(|x| !restrained.contains(&(j, *x))) {
                Some(x) => x,
                None => match (0..cfg.length)
                    .find(|x| !taken.contains(x) && !restrained.contains(&(j, *x)))
                {
                    Some(x) => x,
                    None => continue,
                },
            };
            witness[r] = Some(x);
            let Some(mut c) = fam.run(j, recs[r].program, x, s)? else {
                continue;
            };
            if c.output == fam.g[j][x] {
                c.value = fam.fresh(specs[j], j, x, s);
                recs[r].actions += 1;
            }
            restrained.insert((j, x));
            restrained.extend(c.uses.iter().map(|&(i, p, _)| (i, p)));
            recs[r].certificate = Some(c);
        }
    }

    // Certify by evaluating each recorded computation on the final prefixes.
    for (r, rec) in recs.iter_mut().enumerate() {
        let j = r % k;
        rec.met = match &rec.certificate {
            Some(c) => {
                let again = fam.run(j, rec.program, c.witness, cfg.stages)?;
                fam.still_holds(c, j)
                    && again
                        .is_some_and(|a| a.output == c.output && a.output != fam.g[j][c.witness])
            }
            None => false,
        };
    }
    let met = recs.iter().filter(|r| r.met).count();
    let log = RequirementLog {
        stages: cfg.stages,
        met,
        unmet: m - met,
        requirements: recs,
    };
    Ok((fam.g.into_iter().map(FiniteFunction).collect(), log))
}

// ---------------------------------------------------------------------------
// Dumps

pub const TOWER_SCHEMA: &str = "towerlab.tower/1";
pub const MAP_SCHEMA: &str = "towerlab.map/1";
pub const LOG_SCHEMA: &str = "towerlab.level-log/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestLevel {
    pub notation: String,
    pub code: Option<u64>,
    pub above: Option<String>,
    pub pred: Option<String>,
    pub copylen: u64,
    pub file_stem: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerManifest {
    pub schema: String,
    pub top: String,
    pub config: BuildConfig,
    pub levels: Vec<ManifestLevel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapDump {
    pub schema: String,
    #[serde(flatten)]
    pub map: MonotoneMap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogDump {
    pub schema: String,
    #[serde(flatten)]
    pub log: LevelLog,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(io::Error::other)
}

/// Writes `tower.json` and, per level, tree, map and log files.
pub fn write_tower_dump(tw: &Tower, dir: &Path) -> io::Result<TowerManifest> {
    fs::create_dir_all(dir)?;
    let name = |id: Option<NodeId>| id.map(|i| tw.segment.base(i).to_string());
    let mut levels = Vec::new();
    for (pos, &id) in tw.segment.ascending().iter().enumerate() {
        let lvl = &tw.levels[&id];
        let stem = format!("level-{pos:03}");
        write_json(
            &dir.join(format!("{stem}.tree.json")),
            &lvl.tree().to_dump(),
        )?;
        write_json(
            &dir.join(format!("{stem}.map.json")),
            &MapDump {
                schema: MAP_SCHEMA.into(),
                map: lvl.theta().clone(),
            },
        )?;
        write_json(
            &dir.join(format!("{stem}.log.json")),
            &LogDump {
                schema: LOG_SCHEMA.into(),
                log: lvl.build.log.clone(),
            },
        )?;
        levels.push(ManifestLevel {
            notation: lvl.notation.to_string(),
            code: crate::notation::try_code_of(&lvl.notation),
            above: name(lvl.above),
            pred: name(lvl.pred),
            copylen: lvl.copylen,
            file_stem: stem,
        });
    }
    let manifest = TowerManifest {
        schema: TOWER_SCHEMA.into(),
        top: tw.segment.top_base().to_string(),
        config: tw.config,
        levels,
    };
    write_json(&dir.join("tower.json"), &manifest)?;
    Ok(manifest)
}

/// Reloads a dump against the segment it was built over.
pub fn read_tower_dump(segment: Arc<NiceSegment>, dir: &Path) -> io::Result<Tower> {
    let manifest: TowerManifest = read_json(&dir.join("tower.json"))?;
    if manifest.schema != TOWER_SCHEMA {
        return Err(io::Error::other(format!(
            "unknown schema {}",
            manifest.schema
        )));
    }
    let lookup = |s: &str| -> io::Result<NodeId> {
        let n: Notation = s.parse().map_err(io::Error::other)?;
        segment
            .lookup(&n)
            .ok_or_else(|| io::Error::other(format!("{s} is not in the segment")))
    };
    let mut levels = BTreeMap::new();
    for ml in &manifest.levels {
        let id = lookup(&ml.notation)?;
        let tree: TreeDump = read_json(&dir.join(format!("{}.tree.json", ml.file_stem)))?;
        let map: MapDump = read_json(&dir.join(format!("{}.map.json", ml.file_stem)))?;
        let log: LogDump = read_json(&dir.join(format!("{}.log.json", ml.file_stem)))?;
        levels.insert(
            id,
            Level {
                node: id,
                notation: segment.base(id).clone(),
                above: ml.above.as_deref().map(lookup).transpose()?,
                pred: ml.pred.as_deref().map(lookup).transpose()?,
                copylen: ml.copylen,
                build: LevelBuild {
                    tree: LevelTree::from_dump(&tree),
                    theta: map.map,
                    log: log.log,
                },
                spec: LevelSpec::default(),
            },
        );
    }
    if levels.len() != segment.len() {
        return Err(io::Error::other("dump does not cover the segment"));
    }
    Ok(Tower {
        segment,
        levels,
        config: manifest.config,
    })
}

// ---------------------------------------------------------------------------
// Scripted inputs

/// Two branches `0^depth` and `1^depth`.
pub fn two_path_seed(depth: usize) -> LevelTree {
    LevelTree::new(
        [FingerString(vec![0; depth]), FingerString(vec![1; depth])],
        depth,
    )
}

/// Residue targets for a level: target `i` has modulus `2 + i % 3`, applies
/// from length 1 and probes three program indices.
pub fn residue_targets(count: usize, oracle: Option<OracleApproximation>) -> Vec<EnumerableTarget> {
    (0..count)
        .map(|i| {
            let probes = (0..3).map(|p| 3 * i as u64 + p).collect();
            EnumerableTarget::residue(2 + (i as u64 % 3), 1, probes, oracle.clone())
        })
        .collect()
}

/// Code of a notation for file names and reports.
pub fn level_code(beta: &Notation) -> u64 {
    code_of(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nicety::nicify;
    use crate::trees::MockPhi;

    fn fs(v: &[u64]) -> FingerString {
        FingerString(v.to_vec())
    }

    fn cfg(stages: u64, depth: usize) -> BuildConfig {
        BuildConfig {
            stages,
            depth,
            ..Default::default()
        }
    }

    #[test]
    fn base_extension_records_stage() {
        let up = LevelTree::full_binary(3);
        let b = build_level(
            StageSource::Static(&up),
            &up,
            &LevelSpec::default(),
            0,
            &cfg(40, 3),
        )
        .unwrap();
        assert_eq!(b.theta.get(&fs(&[])), Some(&fs(&[])));
        for k in 0..2 {
            let first = b
                .theta
                .changes
                .iter()
                .find(|c| c.node == fs(&[k]))
                .expect("defined");
            assert_eq!(
                first.image,
                Some(fs(&[stage_pair(k, first.stage, 41).unwrap()]))
            );
            assert_eq!(first.stage, fs(&[k]).clock());
        }
        assert!(b.theta.injuries.is_empty());
        assert!(b.theta.check_monotone().pass);
        assert!(b.theta.check_images_in(&b.tree).pass);
    }

    #[test]
    fn prefix_target_injures_root() {
        let up = LevelTree::full_binary(3);
        let c = cfg(40, 3);
        let meet = fs(&[stage_pair(0, 1, c.stride()).unwrap()]);
        let spec = LevelSpec {
            targets: vec![EnumerableTarget::prefix(5, meet.clone())],
            ..Default::default()
        };
        let b = build_level(StageSource::Static(&up), &up, &spec, 0, &c).unwrap();
        let inj = b
            .theta
            .injuries
            .iter()
            .find(|i| i.cause == InjuryCause::Genericity)
            .unwrap();
        assert_eq!(inj.node, fs(&[]));
        assert_eq!(inj.stage, 5);
        assert!(meet.is_prefix_of(b.theta.get(&fs(&[])).unwrap()));
    }

    #[test]
    fn small_with_large_probe_never_prunes() {
        let up = LevelTree::full_binary(3);
        let spec = LevelSpec {
            xi: Some(XiProbe::Fixed(FiniteFunction(vec![0; 8]))),
            ..Default::default()
        };
        let c = BuildConfig {
            variant: Variant::Small,
            ..cfg(40, 3)
        };
        let b = build_level(StageSource::Static(&up), &up, &spec, 0, &c).unwrap();
        assert!(b
            .theta
            .injuries
            .iter()
            .all(|i| i.cause != InjuryCause::Smallness));
    }

    #[test]
    fn alt1_pads_and_disagrees() {
        let up = LevelTree::full_binary(4);
        let spec = LevelSpec {
            phi: Some(Arc::new(MockPhi)),
            ..Default::default()
        };
        let c = BuildConfig {
            variant: Variant::Alt1,
            ..cfg(200, 4)
        };
        let b = build_level(StageSource::Static(&up), &up, &spec, 0, &c).unwrap();
        assert!(b.log.decisions.iter().any(|d| d.padding));
        assert!(b.theta.check_monotone().pass);
    }

    #[test]
    fn degenerate_and_small_towers() {
        let seed = LevelTree::full_binary(3);
        let seg = Arc::new(nicify(&Notation::zero()).unwrap());
        let tw = build_tower(seg, &seed, &|_| LevelSpec::default(), &cfg(30, 3)).unwrap();
        assert_eq!(tw.levels.len(), 1);
        assert_eq!(tw.level(tw.top()).tree(), &seed);

        let seg = Arc::new(nicify(&Notation::finite(2)).unwrap());
        let tw = build_tower(seg, &seed, &|_| LevelSpec::default(), &cfg(60, 3)).unwrap();
        assert_eq!(tw.levels.len(), 3);
        let audit = audit_tower(&tw);
        assert!(audit.pass(), "{audit:?}");
        let top = tw.top();
        let bottom = tw.bottom();
        let mid = tw.below(top).unwrap();
        for sigma in tw.level(top).tree().nodes() {
            assert_eq!(treemap(&tw, top, top, sigma).unwrap(), *sigma);
            let one = tw.level(mid).theta().get(sigma).cloned();
            assert_eq!(treemap(&tw, top, mid, sigma).ok(), one);
            let two = one.and_then(|m| tw.level(bottom).theta().get(&m).cloned());
            assert_eq!(treemap(&tw, top, bottom, sigma).ok(), two);
        }
    }

    #[test]
    fn eager_audit_examples() {
        let t = LevelTree::full_binary(3);
        assert_eq!(audit_eager(&t, &[], 0).unwrap().fraction(), 1.0);
        let hits = vec![EnumerableTarget::residue(1, 2, vec![], None)];
        let r = audit_eager(&t, &hits, 0).unwrap();
        assert_eq!(r.decided, r.pairs);
        let mut dead = LevelTree::new(t.nodes().iter().cloned().chain([fs(&[5])]), 3);
        dead.kill(&fs(&[5]));
        let r = audit_eager(&dead, &[EnumerableTarget::prefix(0, fs(&[5]))], 0).unwrap();
        assert_eq!(r.decided, r.pairs);
    }

    #[test]
    fn family_budget_zero_meets_nothing() {
        let specs: Vec<&dyn ExclusionSpec> = vec![&OpenSpec, &OpenSpec];
        let c = FamilyConfig {
            stages: 0,
            ..Default::default()
        };
        let (_, log) = build_independent_family(2, &specs, &c).unwrap();
        assert_eq!(log.met, 0);
    }
}
