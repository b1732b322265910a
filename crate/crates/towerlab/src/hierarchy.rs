//! Majorization, the fast-growing modulus hierarchy over a nice segment, its
//! stagewise approximations, and König-style extraction of a unique path.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{
    mock_oracle, settle_time, simulated_oracle, JumpMachine, MachineError, OracleApproximation,
    SettleSpec,
};
use crate::nicety::{NiceSegment, NodeId, NodeKind};
use crate::notation::{try_code_of, Notation};

/// A finite prefix `f | N` of a function on the naturals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiniteFunction(pub Vec<u64>);

impl FiniteFunction {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: usize) -> Option<u64> {
        self.0.get(x).copied()
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn prefix(&self, n: usize) -> FiniteFunction {
        FiniteFunction(self.0[..n.min(self.0.len())].to_vec())
    }
}

impl From<Vec<u64>> for FiniteFunction {
    fn from(v: Vec<u64>) -> Self {
        FiniteFunction(v)
    }
}

/// `f(x) >= g(x)` wherever both are defined.
pub fn majorizes(f: &FiniteFunction, g: &FiniteFunction) -> bool {
    dominates(f, g, 0)
}

/// `f(x) >= g(x)` on the common domain except possibly for `x < k`.
pub fn dominates(f: &FiniteFunction, g: &FiniteFunction, k: usize) -> bool {
    f.0.iter().zip(&g.0).skip(k).all(|(a, b)| a >= b)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("no oracle for successor level {0}")]
    MissingOracle(Notation),
    #[error("settle probe for {index} at level {level} inconclusive within {budget} stages")]
    BudgetExhausted {
        level: Notation,
        index: u64,
        budget: u64,
    },
    #[error("{0} is not in the segment")]
    NotInSegment(Notation),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

/// Oracles keyed by the successor notation `b + 1` whose jump they
/// approximate.
pub type OracleFamily = BTreeMap<Notation, OracleApproximation>;

/// Simulated jumps for every finite successor `n` of the segment with
/// `n <= max_level`.
pub fn simulated_family(
    seg: &NiceSegment,
    machine: Arc<JumpMachine>,
    max_level: u32,
) -> OracleFamily {
    seg.nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Successor)
        .filter_map(|n| {
            let lvl = n.base.as_finite()?;
            (lvl <= max_level as u64).then(|| {
                (
                    n.base.clone(),
                    simulated_oracle(Arc::clone(&machine), lvl as u32),
                )
            })
        })
        .collect()
}

/// Parameters of a seeded mock family.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFamilyConfig {
    pub seed: u64,
    /// Indices `< indices` may converge.
    pub indices: u64,
    /// Settling times are drawn from `1..=max_settle`.
    pub max_settle: u64,
    /// Percentage of indices that converge.
    pub converge_pct: u32,
}

impl Default for MockFamilyConfig {
    fn default() -> Self {
        MockFamilyConfig {
            seed: 7,
            indices: 64,
            max_settle: 60,
            converge_pct: 60,
        }
    }
}

/// One seeded mock oracle per successor of the segment. Each successor gets
/// its own stream so adding nodes does not perturb existing specs.
pub fn mock_family(seg: &NiceSegment, cfg: &MockFamilyConfig) -> OracleFamily {
    seg.nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Successor)
        .map(|n| {
            let stream = try_code_of(&n.base).unwrap_or(u64::MAX);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let spec = SettleSpec::new(
                n.base.as_finite().unwrap_or(0) as u32,
                (0..cfg.indices).filter_map(|i| {
                    let t = rng.gen_range(1..=cfg.max_settle);
                    (rng.gen_range(0..100) < cfg.converge_pct).then_some((i, t))
                }),
            );
            (
                n.base.clone(),
                mock_oracle(spec, n.base.as_finite().unwrap_or(0) as u32),
            )
        })
        .collect()
}

/// `(x, stage)`, with `stage = None` for the limit value.
type ColumnKey = (u64, Option<u64>);

/// The modulus hierarchy over a nice segment.
///
/// At zero the value is 0. At a successor `b + 1` it is the larger of the
/// hat term and every value at or below `b`; the hat term is the value at
/// `b` while `x < code(b + 1)` and otherwise the largest settling time of an
/// index `i < x` in the oracle for `b + 1`. At a limit it is the largest value
/// over notations below it whose code is at most `x`.
#[derive(Debug)]
pub struct ModulusHierarchy {
    segment: Arc<NiceSegment>,
    oracles: OracleFamily,
    probe_budget: u64,
    codes: Vec<Option<u64>>,
    /// Position of each node in ascending order.
    position: Vec<usize>,
    /// Column of values in ascending segment order for each `(x, stage)`;
    /// `stage = None` is the limit value.
    cache: Mutex<HashMap<ColumnKey, Arc<Vec<u64>>>>,
}

impl ModulusHierarchy {
    pub fn new(segment: Arc<NiceSegment>, oracles: OracleFamily, probe_budget: u64) -> Self {
        let codes = segment
            .nodes()
            .iter()
            .map(|n| try_code_of(&n.base))
            .collect();
        let mut position = vec![0; segment.len()];
        for (i, &id) in segment.ascending().iter().enumerate() {
            position[id] = i;
        }
        ModulusHierarchy {
            segment,
            oracles,
            probe_budget,
            codes,
            position,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn segment(&self) -> &NiceSegment {
        &self.segment
    }

    pub fn oracles(&self) -> &OracleFamily {
        &self.oracles
    }

    pub fn probe_budget(&self) -> u64 {
        self.probe_budget
    }

    fn hat(&self, node: NodeId, x: u64, stage: Option<u64>) -> Result<u64, HierarchyError> {
        let base = self.segment.base(node);
        let oracle = self
            .oracles
            .get(base)
            .ok_or_else(|| HierarchyError::MissingOracle(base.clone()))?;
        let mut best = 0;
        for i in 0..x {
            let t = match stage {
                Some(s) => oracle.settle_estimate(i, s)?,
                None => settle_time(oracle, i, self.probe_budget)?.ok_or_else(|| {
                    HierarchyError::BudgetExhausted {
                        level: base.clone(),
                        index: i,
                        budget: self.probe_budget,
                    }
                })?,
            };
            best = best.max(t);
        }
        Ok(best)
    }

    /// Values in ascending segment order, computed at least through
    /// position `upto`.
    fn column(
        &self,
        x: u64,
        stage: Option<u64>,
        upto: usize,
    ) -> Result<Arc<Vec<u64>>, HierarchyError> {
        if let Some(c) = self.cache.lock().expect("hierarchy cache").get(&(x, stage)) {
            if c.len() > upto {
                return Ok(Arc::clone(c));
            }
        }
        let mut values = Vec::with_capacity(upto + 1);
        // running maxima over everything so far, and over codes <= x
        let mut below = 0u64;
        let mut below_coded = 0u64;
        for &id in &self.segment.ascending()[..=upto] {
            let v = match self.segment.node(id).kind {
                NodeKind::Zero => 0,
                NodeKind::Limit => below_coded,
                NodeKind::Successor => {
                    let code = self.codes[id].unwrap_or(u64::MAX);
                    if x < code {
                        below
                    } else {
                        below.max(self.hat(id, x, stage)?)
                    }
                }
            };
            values.push(v);
            below = below.max(v);
            if self.codes[id].is_some_and(|c| c <= x) {
                below_coded = below_coded.max(v);
            }
        }
        let values = Arc::new(values);
        let mut cache = self.cache.lock().expect("hierarchy cache");
        let slot = cache
            .entry((x, stage))
            .or_insert_with(|| Arc::clone(&values));
        if slot.len() < values.len() {
            *slot = Arc::clone(&values);
        }
        Ok(values)
    }

    pub fn xi_node(&self, node: NodeId, x: u64) -> Result<u64, HierarchyError> {
        let pos = self.position[node];
        Ok(self.column(x, None, pos)?[pos])
    }

    /// The stage-`s` approximation, built from the last observed change of
    /// each oracle entry up to `s`.
    pub fn xi_approx_node(&self, node: NodeId, x: u64, s: u64) -> Result<u64, HierarchyError> {
        let pos = self.position[node];
        Ok(self.column(x, Some(s), pos)?[pos])
    }

    fn node_of(&self, beta: &Notation) -> Result<NodeId, HierarchyError> {
        self.segment
            .lookup(beta)
            .ok_or_else(|| HierarchyError::NotInSegment(beta.clone()))
    }

    pub fn xi(&self, beta: &Notation, x: u64) -> Result<u64, HierarchyError> {
        self.xi_node(self.node_of(beta)?, x)
    }

    pub fn xi_approx(&self, beta: &Notation, x: u64, s: u64) -> Result<u64, HierarchyError> {
        self.xi_approx_node(self.node_of(beta)?, x, s)
    }

    pub fn xi_prefix(&self, beta: &Notation, len: u64) -> Result<FiniteFunction, HierarchyError> {
        let id = self.node_of(beta)?;
        Ok(FiniteFunction(
            (0..len)
                .map(|x| self.xi_node(id, x))
                .collect::<Result<_, _>>()?,
        ))
    }

    /// Decides `xi(beta, x) >= y` by searching stages for an approximation
    /// that reaches `y`.
    pub fn xi_at_least(&self, beta: &Notation, x: u64, y: u64) -> Result<bool, HierarchyError> {
        let id = self.node_of(beta)?;
        for s in 0..=self.probe_budget {
            if self.xi_approx_node(id, x, s)? >= y {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn dump(
        &self,
        betas: &[Notation],
        xs: std::ops::Range<u64>,
    ) -> Result<HierarchyDump, HierarchyError> {
        let mut entries = Vec::new();
        for b in betas {
            for x in xs.clone() {
                entries.push(HierarchyEntry {
                    beta: b.to_string(),
                    x,
                    value: self.xi(b, x)?,
                });
            }
        }
        Ok(HierarchyDump {
            schema: HIERARCHY_SCHEMA.into(),
            entries,
        })
    }
}

pub const HIERARCHY_SCHEMA: &str = "towerlab.hierarchy/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyEntry {
    pub beta: String,
    pub x: u64,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyDump {
    pub schema: String,
    pub entries: Vec<HierarchyEntry>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KoenigError {
    #[error("{} live nodes at the extraction depth", .0.len())]
    NotUnique(Vec<FiniteFunction>),
    #[error("no path reaches the horizon")]
    Empty,
    #[error("search exceeded {0} nodes")]
    Budget(usize),
    #[error("depth {depth} exceeds the bounding prefix length {len}")]
    TooDeep { depth: usize, len: usize },
}

const KOENIG_NODE_CAP: usize = 1 << 22;

/// Searches `{ s : s(x) <= h(x), tree_of(every prefix of s) }` out to the
/// full length of `h`, and returns the unique node of length `depth` that
/// still has an extension of that length.
pub fn koenig_extract(
    h: &FiniteFunction,
    tree_of: &dyn Fn(&[u64]) -> bool,
    depth: usize,
) -> Result<FiniteFunction, KoenigError> {
    if depth > h.len() {
        return Err(KoenigError::TooDeep {
            depth,
            len: h.len(),
        });
    }
    let horizon = h.len();
    let mut visited = 0usize;
    // Breadth first to the extraction depth.
    let mut level: Vec<Vec<u64>> = if tree_of(&[]) {
        vec![Vec::new()]
    } else {
        Vec::new()
    };
    for x in 0..depth {
        let mut next = Vec::new();
        for s in &level {
            for v in 0..=h.0[x] {
                visited += 1;
                if visited > KOENIG_NODE_CAP {
                    return Err(KoenigError::Budget(KOENIG_NODE_CAP));
                }
                let mut t = s.clone();
                t.push(v);
                if tree_of(&t) {
                    next.push(t);
                }
            }
        }
        level = next;
    }
    fn reaches(
        s: &mut Vec<u64>,
        h: &FiniteFunction,
        horizon: usize,
        tree_of: &dyn Fn(&[u64]) -> bool,
        visited: &mut usize,
    ) -> Result<bool, KoenigError> {
        if s.len() == horizon {
            return Ok(true);
        }
        for v in 0..=h.0[s.len()] {
            *visited += 1;
            if *visited > KOENIG_NODE_CAP {
                return Err(KoenigError::Budget(KOENIG_NODE_CAP));
            }
            s.push(v);
            let live = tree_of(s) && reaches(s, h, horizon, tree_of, visited)?;
            s.pop();
            if live {
                return Ok(true);
            }
        }
        Ok(false)
    }
    let mut live = Vec::new();
    for mut s in level {
        if reaches(&mut s, h, horizon, tree_of, &mut visited)? {
            live.push(FiniteFunction(s));
        }
    }
    match live.len() {
        0 => Err(KoenigError::Empty),
        1 => Ok(live.pop().expect("one")),
        _ => Err(KoenigError::NotUnique(live)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nicety::nicify;
    use crate::notation::parse_notation;

    #[test]
    fn majorization_examples() {
        assert!(majorizes(&vec![5, 5, 5].into(), &vec![1, 2, 3].into()));
        assert!(!majorizes(&vec![1, 2].into(), &vec![2, 2].into()));
        assert!(dominates(&vec![0, 9, 9].into(), &vec![7, 1, 1].into(), 1));
    }

    #[test]
    fn xi_examples() {
        let seg = Arc::new(nicify(&parse_notation("2").unwrap()).unwrap());
        let one = parse_notation("1").unwrap();
        let fam = OracleFamily::from([(
            one.clone(),
            mock_oracle(SettleSpec::new(1, [(0, 3), (2, 7)]), 1),
        )]);
        let h = ModulusHierarchy::new(seg, fam, 100);
        assert_eq!(h.xi(&Notation::zero(), 9).unwrap(), 0);
        assert_eq!(h.xi(&one, 3).unwrap(), 7);
        assert_eq!(h.xi(&one, 2).unwrap(), 3);
        // x below code(1) = 1 falls back to the predecessor
        assert_eq!(h.xi(&one, 0).unwrap(), 0);
    }

    #[test]
    fn koenig_examples() {
        let alt = |s: &[u64]| s.iter().enumerate().all(|(i, &v)| v == (i % 2) as u64);
        let h = FiniteFunction(vec![1; 4]);
        assert_eq!(koenig_extract(&h, &alt, 4).unwrap().0, vec![0, 1, 0, 1]);
        assert!(matches!(
            koenig_extract(&h, &|_| true, 4),
            Err(KoenigError::NotUnique(_))
        ));
        assert_eq!(
            koenig_extract(&h, &|s| s.len() < 3, 2),
            Err(KoenigError::Empty)
        );
    }
}
