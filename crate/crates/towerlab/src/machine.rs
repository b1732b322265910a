//! A small counter machine with an oracle query, stagewise approximations to
//! the finite iterated jumps, and mocked oracle families with prescribed
//! settling times.
//!
//! Programs are lists of instructions over unbounded registers. Register 0
//! holds the input, every other register starts at 0. Executing any
//! instruction costs one step; running off the end of the program behaves as
//! `halt 0`.
//!
//! Encoding. An instruction with code `n` has opcode `n mod 5` (0 inc, 1 dec,
//! 2 jz, 3 query, 4 halt) and argument `n / 5`, which is Cantor-unpaired into
//! `(register, address)` for the two-argument opcodes. A program is a
//! nonempty list: `[a]` is `pair(a, 0)` and `a :: rest` is
//! `pair(a, code(rest) + 1)`. Every natural decodes to exactly one program.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notation::{cantor_pair, cantor_unpair};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("program code overflows u64")]
    CodeOverflow,
    #[error("jump level {level} exceeds configured maximum {max}")]
    LevelTooHigh { level: u32, max: u32 },
    #[error("stage {stage} exceeds configured maximum {max}")]
    StageTooHigh { stage: u64, max: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Inc(u64),
    Dec(u64),
    /// Jump to the address if the register is zero.
    Jz(u64, u64),
    /// Jump to the address if the register's value is in the oracle.
    Query(u64, u64),
    Halt(u64),
}

impl Instr {
    pub fn code(&self) -> Option<u64> {
        let (op, arg) = match *self {
            Instr::Inc(r) => (0, Some(r)),
            Instr::Dec(r) => (1, Some(r)),
            Instr::Jz(r, a) => (2, cantor_pair(r, a)),
            Instr::Query(r, a) => (3, cantor_pair(r, a)),
            Instr::Halt(r) => (4, Some(r)),
        };
        arg?.checked_mul(5)?.checked_add(op)
    }

    pub fn decode(n: u64) -> Instr {
        let arg = n / 5;
        match n % 5 {
            0 => Instr::Inc(arg),
            1 => Instr::Dec(arg),
            2 => {
                let (r, a) = cantor_unpair(arg);
                Instr::Jz(r, a)
            }
            3 => {
                let (r, a) = cantor_unpair(arg);
                Instr::Query(r, a)
            }
            _ => Instr::Halt(arg),
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Inc(r) => write!(f, "inc {r}"),
            Instr::Dec(r) => write!(f, "dec {r}"),
            Instr::Jz(r, a) => write!(f, "jz {r} {a}"),
            Instr::Query(r, a) => write!(f, "query {r} {a}"),
            Instr::Halt(r) => write!(f, "halt {r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    instrs: Vec<Instr>,
}

impl Program {
    /// Programs are nonempty; an empty list becomes `[halt 0]`.
    pub fn new(instrs: Vec<Instr>) -> Self {
        if instrs.is_empty() {
            Program {
                instrs: vec![Instr::Halt(0)],
            }
        } else {
            Program { instrs }
        }
    }

    pub fn instrs(&self) -> &[Instr] {
        &self.instrs
    }

    /// Position in the canonical enumeration.
    pub fn index(&self) -> Result<u64, MachineError> {
        let mut code: Option<u64> = None;
        for ins in self.instrs.iter().rev() {
            let a = ins.code().ok_or(MachineError::CodeOverflow)?;
            let tail = match code {
                None => 0,
                Some(c) => c.checked_add(1).ok_or(MachineError::CodeOverflow)?,
            };
            code = Some(cantor_pair(a, tail).ok_or(MachineError::CodeOverflow)?);
        }
        Ok(code.expect("nonempty"))
    }

    pub fn from_index(mut n: u64) -> Program {
        let mut instrs = Vec::new();
        loop {
            let (a, t) = cantor_unpair(n);
            instrs.push(Instr::decode(a));
            if t == 0 {
                return Program { instrs };
            }
            n = t - 1;
        }
    }

    /// `halt 1`: halts at once with output 0.
    pub fn immediate_halt() -> Program {
        Program::new(vec![Instr::Halt(1)])
    }

    /// Outputs 1 if the input is in the oracle, 0 otherwise.
    pub fn oracle_echo() -> Program {
        Program::new(vec![
            Instr::Query(0, 2),
            Instr::Halt(1),
            Instr::Inc(1),
            Instr::Halt(1),
        ])
    }

    /// `jz 1 0`: loops forever.
    pub fn tight_loop() -> Program {
        Program::new(vec![Instr::Jz(1, 0)])
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instrs {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}

/// One instruction per line; `#` starts a comment.
impl FromStr for Program {
    type Err = MachineError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut instrs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| MachineError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            let nums: Vec<u64> = words[1..]
                .iter()
                .map(|w| {
                    w.parse::<u64>()
                        .map_err(|_| err("expected a natural number"))
                })
                .collect::<Result<_, _>>()?;
            let arity = |k: usize| {
                if nums.len() == k {
                    Ok(())
                } else {
                    Err(err(&format!("{} takes {k} argument(s)", words[0])))
                }
            };
            let ins = match words[0] {
                "inc" => arity(1).map(|_| Instr::Inc(nums[0]))?,
                "dec" => arity(1).map(|_| Instr::Dec(nums[0]))?,
                "jz" => arity(2).map(|_| Instr::Jz(nums[0], nums[1]))?,
                "query" => arity(2).map(|_| Instr::Query(nums[0], nums[1]))?,
                "halt" => arity(1).map(|_| Instr::Halt(nums[0]))?,
                other => return Err(err(&format!("unknown opcode `{other}`"))),
            };
            instrs.push(ins);
        }
        if instrs.is_empty() {
            return Err(MachineError::Parse {
                line: 0,
                msg: "empty program".into(),
            });
        }
        Ok(Program::new(instrs))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunOutcome {
    Halted { output: u64, steps: u64 },
    Exhausted,
}

/// Runs `p` on `input` with oracle membership given by `oracle`.
pub fn run_program(
    p: &Program,
    oracle: &dyn Fn(u64) -> bool,
    input: u64,
    step_budget: u64,
) -> RunOutcome {
    let mut regs: HashMap<u64, u64> = HashMap::from([(0, input)]);
    let get = |regs: &HashMap<u64, u64>, r: u64| regs.get(&r).copied().unwrap_or(0);
    let mut pc: u64 = 0;
    let mut steps = 0;
    while steps < step_budget {
        steps += 1;
        let ins = p.instrs.get(pc as usize).copied().unwrap_or(Instr::Halt(0));
        pc += 1;
        match ins {
            Instr::Inc(r) => *regs.entry(r).or_insert(0) += 1,
            Instr::Dec(r) => {
                let v = regs.entry(r).or_insert(0);
                *v = v.saturating_sub(1);
            }
            Instr::Jz(r, a) => {
                if get(&regs, r) == 0 {
                    pc = a;
                }
            }
            Instr::Query(r, a) => {
                if oracle(get(&regs, r)) {
                    pc = a;
                }
            }
            Instr::Halt(r) => {
                return RunOutcome::Halted {
                    output: get(&regs, r),
                    steps,
                }
            }
        }
    }
    RunOutcome::Exhausted
}

/// Settling times of a mocked oracle: `i` enters at stage `settle[i]` and
/// stays; indices without an entry never enter.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettleSpec {
    pub level: u32,
    pub settle: BTreeMap<u64, u64>,
}

impl SettleSpec {
    pub fn new(level: u32, entries: impl IntoIterator<Item = (u64, u64)>) -> Self {
        SettleSpec {
            level,
            settle: entries.into_iter().collect(),
        }
    }
}

/// Nested stagewise approximations to the finite jumps, memoized per
/// `(level, stage, y)`.
#[derive(Debug)]
pub struct JumpMachine {
    max_level: u32,
    max_stage: u64,
    cache: Mutex<HashMap<(u32, u64, u64), bool>>,
}

impl Default for JumpMachine {
    fn default() -> Self {
        JumpMachine::new(3, 4096)
    }
}

impl JumpMachine {
    pub fn new(max_level: u32, max_stage: u64) -> Self {
        JumpMachine {
            max_level,
            max_stage,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn check(&self, level: u32, stage: u64) -> Result<(), MachineError> {
        if level > self.max_level {
            return Err(MachineError::LevelTooHigh {
                level,
                max: self.max_level,
            });
        }
        if stage > self.max_stage {
            return Err(MachineError::StageTooHigh {
                stage,
                max: self.max_stage,
            });
        }
        Ok(())
    }

    /// Whether `y` is in the stage-`stage` approximation at `level`: `y <=
    /// stage` and program `y`, run on input `y` against the level below at
    /// the same stage, halts within `stage` steps.
    pub fn member(&self, level: u32, stage: u64, y: u64) -> Result<bool, MachineError> {
        self.check(level, stage)?;
        if level == 0 || y > stage {
            return Ok(false);
        }
        if let Some(&hit) = self
            .cache
            .lock()
            .expect("jump cache")
            .get(&(level, stage, y))
        {
            return Ok(hit);
        }
        // Lower-level errors cannot occur once the top-level check passed.
        let oracle = |q: u64| self.member(level - 1, stage, q).unwrap_or(false);
        let halted = matches!(
            run_program(&Program::from_index(y), &oracle, y, stage),
            RunOutcome::Halted { .. }
        );
        self.cache
            .lock()
            .expect("jump cache")
            .insert((level, stage, y), halted);
        Ok(halted)
    }

    /// The whole stage-`stage` approximation at `level`; empty at level 0.
    pub fn jump_approx(&self, level: u32, stage: u64) -> Result<BTreeSet<u64>, MachineError> {
        self.check(level, stage)?;
        let mut out = BTreeSet::new();
        for y in 0..=stage {
            if self.member(level, stage, y)? {
                out.insert(y);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub enum OracleKind {
    Simulated(Arc<JumpMachine>),
    Mock(SettleSpec),
}

/// A stagewise approximation to one oracle.
#[derive(Clone, Debug)]
pub struct OracleApproximation {
    pub level: u32,
    pub kind: OracleKind,
}

pub fn mock_oracle(spec: SettleSpec, level: u32) -> OracleApproximation {
    OracleApproximation {
        level,
        kind: OracleKind::Mock(spec),
    }
}

pub fn simulated_oracle(machine: Arc<JumpMachine>, level: u32) -> OracleApproximation {
    OracleApproximation {
        level,
        kind: OracleKind::Simulated(machine),
    }
}

impl OracleApproximation {
    pub fn membership_at(&self, stage: u64, x: u64) -> Result<bool, MachineError> {
        match &self.kind {
            OracleKind::Mock(spec) => Ok(spec.settle.get(&x).is_some_and(|&t| stage >= t)),
            OracleKind::Simulated(m) => m.member(self.level, stage, x),
        }
    }

    /// The last stage `<= stage` at which membership of `i` changed (0 if it
    /// never did). Non-decreasing in `stage`.
    pub fn settle_estimate(&self, i: u64, stage: u64) -> Result<u64, MachineError> {
        match &self.kind {
            OracleKind::Mock(spec) => Ok(spec
                .settle
                .get(&i)
                .copied()
                .filter(|&t| t <= stage)
                .unwrap_or(0)),
            OracleKind::Simulated(_) => {
                let mut last = 0;
                let mut prev = self.membership_at(0, i)?;
                for s in 1..=stage {
                    let cur = self.membership_at(s, i)?;
                    if cur != prev {
                        last = s;
                        prev = cur;
                    }
                }
                Ok(last)
            }
        }
    }
}

/// The least stage `t <= probe_budget` from which membership of `i` is
/// constant up to the budget. A mock reads its spec back, so an entry above
/// the budget is absent. A simulated oracle is absent when its membership
/// still changes at the budget itself.
pub fn settle_time(
    oracle: &OracleApproximation,
    i: u64,
    probe_budget: u64,
) -> Result<Option<u64>, MachineError> {
    match &oracle.kind {
        OracleKind::Mock(spec) => Ok(match spec.settle.get(&i) {
            None => Some(0),
            Some(&t) if t <= probe_budget => Some(t),
            Some(_) => None,
        }),
        OracleKind::Simulated(_) => {
            let t = oracle.settle_estimate(i, probe_budget)?;
            Ok((t == 0 || t < probe_budget).then_some(t))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        let none = |_: u64| false;
        assert_eq!(
            run_program(&Program::immediate_halt(), &none, 5, 10),
            RunOutcome::Halted {
                output: 0,
                steps: 1
            }
        );
        assert_eq!(
            run_program(&Program::tight_loop(), &none, 0, 100),
            RunOutcome::Exhausted
        );
        let spec = SettleSpec::new(1, [(5, 0)]);
        let o = mock_oracle(spec, 1);
        let member = |x: u64| o.membership_at(0, x).unwrap();
        assert_eq!(
            run_program(&Program::oracle_echo(), &member, 5, 10),
            RunOutcome::Halted {
                output: 1,
                steps: 3
            }
        );
        assert_eq!(
            run_program(&Program::oracle_echo(), &member, 4, 10),
            RunOutcome::Halted {
                output: 0,
                steps: 2
            }
        );
    }

    #[test]
    fn settle_examples() {
        let o = mock_oracle(SettleSpec::new(1, [(0, 3), (2, 7)]), 1);
        assert_eq!(settle_time(&o, 2, 50).unwrap(), Some(7));
        assert_eq!(settle_time(&o, 1, 50).unwrap(), Some(0));
        assert_eq!(settle_time(&o, 2, 6).unwrap(), None);
        let o = mock_oracle(SettleSpec::new(1, [(1, 4)]), 1);
        assert!(!o.membership_at(3, 1).unwrap());
        assert!(o.membership_at(4, 1).unwrap());
    }

    #[test]
    fn encoding_round_trips() {
        for n in 0..5000 {
            assert_eq!(Program::from_index(n).index().unwrap(), n);
        }
        let p = Program::oracle_echo();
        assert_eq!(Program::from_index(p.index().unwrap()), p);
        assert_eq!(p.to_string().parse::<Program>().unwrap(), p);
    }

    #[test]
    fn jumps() {
        let m = JumpMachine::default();
        assert!(m.jump_approx(0, 30).unwrap().is_empty());
        let idx = Program::immediate_halt().index().unwrap();
        assert!(!m.jump_approx(1, idx - 1).unwrap().contains(&idx));
        assert!(m.jump_approx(1, idx).unwrap().contains(&idx));
        assert!(matches!(
            m.jump_approx(4, 1),
            Err(MachineError::LevelTooHigh { .. })
        ));
    }
}
