//! The `towerlab` command line. Every subcommand prints a human summary and,
//! when an output location is known, writes JSON artifacts.
//!
//! Exit codes: 0 success, 1 verification failure, 2 budget exhausted or
//! undecided items left, 3 input error.

pub mod report;
pub mod scenarios;
pub mod setup;

use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::formulas::FormulaError;
use crate::hierarchy::FiniteFunction;
use crate::hierarchy::{HierarchyError, KoenigError};
use crate::machine::MachineError;
use crate::nicety::{nicify_with, EnumTree, Materialize, NicetyError};
use crate::notation::{Notation, NotationError};
use crate::tower::{
    audit_eager, audit_tower, build_independent_family, extract_root, read_tower_dump,
    write_tower_dump, ExclusionSpec, FamilyConfig, OpenSpec, TowerError, Variant,
};
use crate::trees::{verify_structure, FingerString, MockPhi, Predicate, StructureInputs};

use report::{Check, Report};
use setup::{OracleMode, RunConfig, SeedShape};

/// Default output directory when `--out-dir` is not given.
pub const OUT_ENV: &str = "TOWERLAB_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Budget(_) => 2,
            CliError::Input(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<NotationError> for CliError {
    fn from(e: NotationError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NicetyError> for CliError {
    fn from(e: NicetyError) -> Self {
        match e {
            NicetyError::BudgetExhausted(_) => CliError::Budget(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<MachineError> for CliError {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::StageTooHigh { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<HierarchyError> for CliError {
    fn from(e: HierarchyError) -> Self {
        match e {
            HierarchyError::BudgetExhausted { .. } => CliError::Budget(e.to_string()),
            HierarchyError::Machine(m) => m.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<KoenigError> for CliError {
    fn from(e: KoenigError) -> Self {
        match e {
            KoenigError::Budget(_) => CliError::Budget(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<FormulaError> for CliError {
    fn from(e: FormulaError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TowerError> for CliError {
    fn from(e: TowerError) -> Self {
        match e {
            TowerError::BudgetExhausted(_) | TowerError::Paused { .. } => {
                CliError::Budget(e.to_string())
            }
            TowerError::Hierarchy(h) => h.into(),
            TowerError::Machine(m) => m.into(),
            TowerError::Level { level, source } => match CliError::from(*source) {
                CliError::Budget(m) => CliError::Budget(format!("level {level}: {m}")),
                CliError::Input(m) => CliError::Input(format!("level {level}: {m}")),
                io => io,
            },
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<crate::trees::TreeError> for CliError {
    fn from(e: crate::trees::TreeError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "towerlab",
    version,
    about = "Nice notations, towers of trees and fast-growing moduli"
)]
pub struct Cli {
    /// Directory for JSON artifacts; defaults to $TOWERLAB_OUT.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Materialize the nicified segment below a notation.
    Nicify {
        #[command(flatten)]
        seg: SegmentArgs,
        /// Segment dump path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print copylen of a notation inside a nicified segment.
    Copylen {
        #[command(flatten)]
        seg: SegmentArgs,
        #[arg(long)]
        beta: String,
    },
    /// Print the enumeration address of a notation.
    Enumseq {
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        beta: String,
    },
    /// Tabulate the modulus hierarchy at one level.
    Xi {
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        beta: String,
        /// Arguments `0..len`.
        #[arg(long, default_value_t = 16)]
        len: u64,
        /// Stage of the approximation; the limit value when omitted.
        #[arg(long)]
        stage: Option<u64>,
        #[arg(long, default_value = "simulated")]
        oracle: String,
        #[arg(long, default_value_t = 4096)]
        probe: u64,
    },
    /// Build a tower of trees or re-verify a dumped one.
    #[command(subcommand)]
    Tower(TowerCommand),
    /// Re-run audits on a dumped tower.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Map a top-level path of a dumped tower down to the bottom level.
    Extract {
        dir: PathBuf,
        /// Comma-separated top path; the leftmost longest path when omitted.
        #[arg(long)]
        path: Option<String>,
        /// Length of the extracted prefix.
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
    /// Build a family of mutually independent function prefixes.
    Independent {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 6)]
        requirements: usize,
        #[arg(long, default_value_t = 64)]
        stages: u64,
        #[arg(long, default_value_t = 16)]
        length: usize,
        #[arg(long, default_value_t = 256)]
        step_budget: u64,
    },
    /// Run acceptance criteria and write one report per criterion.
    Acceptance {
        /// A single criterion in 1..=11; all twelve when omitted.
        #[arg(long)]
        criterion: Option<u32>,
    },
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub alpha: String,
    /// Children materialized per limit.
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_nodes: usize,
}

impl SegmentArgs {
    fn materialize(&self) -> Materialize {
        Materialize {
            width: self.width,
            max_nodes: self.max_nodes,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum TowerCommand {
    /// Build a tower and dump it with its run configuration.
    Build(BuildArgs),
    /// Audit a dumped tower.
    Verify { dir: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum AuditCommand {
    /// Check that each path decides each genericity target.
    Eager {
        dir: PathBuf,
        /// Enumeration stage; the build budget when omitted.
        #[arg(long)]
        stage: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SeedArg {
    FullBinary,
    TwoPath,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariantArg {
    Base,
    Alt1,
    Small,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub seg: SegmentArgs,
    #[arg(long, value_enum, default_value_t = SeedArg::FullBinary)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 2000)]
    pub stages: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Base)]
    pub variant: VariantArg,
    /// Residue targets per level.
    #[arg(long, default_value_t = 4)]
    pub targets: usize,
    /// `simulated`, `mock` or `mock:FILE`.
    #[arg(long, default_value = "simulated")]
    pub oracle: String,
    #[arg(long, default_value_t = 4096)]
    pub probe: u64,
    /// Dump directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl BuildArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        if self.depth == 0 || self.stages == 0 || self.probe == 0 {
            return Err(CliError::Input("budgets must be positive".into()));
        }
        let mut cfg = RunConfig::new(parse(&self.seg.alpha)?);
        cfg.materialize = self.seg.materialize();
        cfg.seed = match self.seed {
            SeedArg::FullBinary => SeedShape::FullBinary,
            SeedArg::TwoPath => SeedShape::TwoPath,
        };
        cfg.build.depth = self.depth;
        cfg.build.stages = self.stages;
        cfg.build.variant = match self.variant {
            VariantArg::Base => Variant::Base,
            VariantArg::Alt1 => Variant::Alt1,
            VariantArg::Small => Variant::Small,
        };
        cfg.targets = self.targets;
        cfg.oracle = OracleMode::parse(&self.oracle)?;
        cfg.probe_budget = self.probe;
        Ok(cfg)
    }
}

fn parse(text: &str) -> Result<Notation, CliError> {
    Ok(text.parse()?)
}

/// Parses `argv` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
    match execute(cli.command, out_dir.as_deref()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(v).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Prints the summary, writes the report where asked, and maps it to an exit
/// code.
fn finish(report: &Report, path: Option<PathBuf>) -> Result<i32, CliError> {
    print!("{}", report.summary());
    if let Some(p) = path {
        report.write(&p)?;
    }
    Ok(if !report.pass() {
        1
    } else if !report.undecided.is_empty() {
        2
    } else {
        0
    })
}

fn execute(cmd: Command, out_dir: Option<&Path>) -> Result<i32, CliError> {
    let in_out = |name: &str| out_dir.map(|d| d.join(name));
    match cmd {
        Command::Nicify { seg, out } => {
            let m = seg.materialize();
            let s = nicify_with(&parse(&seg.alpha)?, &m)?;
            let dump = s.to_dump();
            println!("{}: {} nodes materialized", dump.top, dump.nodes.len());
            for n in dump.nodes.iter().take(24) {
                println!("  {:<16} copylen {}", n.base, n.copylen);
            }
            if let Some(p) = out.or_else(|| in_out("segment.json")) {
                write_json(&p, &dump)?;
            }
            Ok(0)
        }
        Command::Copylen { seg, beta } => {
            let s = nicify_with(&parse(&seg.alpha)?, &seg.materialize())?;
            let b = parse(&beta)?;
            let id = s.lookup(&b).ok_or_else(|| {
                CliError::Input(format!("{b} is not materialized below {}", s.top_base()))
            })?;
            println!("{}", s.copylen(id));
            if let Some(p) = in_out("copylen.json") {
                write_json(
                    &p,
                    &json!({ "alpha": s.top_base(), "beta": b, "copylen": s.copylen(id) }),
                )?;
            }
            Ok(0)
        }
        Command::Enumseq { alpha, beta } => {
            let mut tree = EnumTree::new(parse(&alpha)?, 1 << 20);
            let b = parse(&beta)?;
            let seq = tree.enumseq(&b)?;
            let text: Vec<String> = seq.iter().map(|a| a.to_string()).collect();
            println!("{}", text.join(" > "));
            if let Some(p) = in_out("enumseq.json") {
                write_json(&p, &json!({ "alpha": alpha, "beta": b, "enumseq": text }))?;
            }
            Ok(0)
        }
        Command::Xi {
            alpha,
            beta,
            len,
            stage,
            oracle,
            probe,
        } => {
            let mut cfg = RunConfig::new(parse(&alpha)?);
            cfg.oracle = OracleMode::parse(&oracle)?;
            cfg.probe_budget = probe;
            let seg = cfg.segment()?;
            let h = cfg.hierarchy(&seg)?;
            let b = parse(&beta)?;
            let values: Vec<u64> = (0..len)
                .map(|x| match stage {
                    Some(s) => h.xi_approx(&b, x, s),
                    None => h.xi(&b, x),
                })
                .collect::<Result<_, _>>()?;
            println!("xi^{b} = {values:?}");
            if let Some(p) = in_out("xi.json") {
                write_json(
                    &p,
                    &json!({ "alpha": alpha, "beta": b, "stage": stage, "values": values }),
                )?;
            }
            Ok(0)
        }
        Command::Tower(TowerCommand::Build(args)) => {
            let cfg = args.config()?;
            let built = cfg.build()?;
            let manifest = write_tower_dump(&built.tower, &args.out)?;
            cfg.save(&args.out)?;
            let mut r = Report::new(
                "tower build",
                serde_json::to_value(&cfg).map_err(io::Error::other)?,
            );
            let a = audit_tower(&built.tower);
            push_audit(&mut r, &a);
            r.budget("stages", cfg.build.stages);
            r.budget("depth", cfg.build.depth as u64);
            r.data = json!({
                "levels": manifest.levels.len(),
                "nodes": built.tower.descending().map(|l| l.tree().len()).collect::<Vec<_>>(),
            });
            finish(&r, Some(args.out.join("report.json")))
        }
        Command::Tower(TowerCommand::Verify { dir }) => {
            let cfg = RunConfig::load(&dir)?;
            let seg = cfg.segment()?;
            let tw = read_tower_dump(seg, &dir)?;
            let mut r = Report::new(
                "tower verify",
                serde_json::to_value(&cfg).map_err(io::Error::other)?,
            );
            push_audit(&mut r, &audit_tower(&tw));
            let which: &[Predicate] = match cfg.build.variant {
                Variant::Base => &[],
                Variant::Alt1 => &[Predicate::Padded, Predicate::Disagreement],
                Variant::Small => &[Predicate::Largeness, Predicate::UniquelySmall],
            };
            if !which.is_empty() {
                let h = cfg.hierarchy(&tw.segment)?;
                for lvl in tw.descending() {
                    let Some(above) = lvl.above else { continue };
                    let xi = if cfg.build.variant == Variant::Small {
                        let up = lvl.notation.succ();
                        Some(FiniteFunction(
                            (0..cfg.build.depth as u64)
                                .map(|x| h.xi_approx(&up, x, cfg.build.stages))
                                .collect::<Result<_, _>>()?,
                        ))
                    } else {
                        None
                    };
                    let inputs = StructureInputs {
                        theta: Some(&lvl.theta().final_map),
                        domain: Some(tw.level(above).tree()),
                        xi_probe: xi.as_ref(),
                        phi: Some(&MockPhi),
                        phi_budget: cfg.build.stages,
                        copylen: lvl.copylen,
                    };
                    for (p, part) in verify_structure(lvl.tree(), &inputs, which)? {
                        r.push(Check::from_part(&format!("{} {p:?}", lvl.notation), &part));
                    }
                }
            }
            finish(&r, Some(dir.join("verify.json")))
        }
        Command::Audit(AuditCommand::Eager { dir, stage }) => {
            let cfg = RunConfig::load(&dir)?;
            let seg = cfg.segment()?;
            let tw = read_tower_dump(seg, &dir)?;
            let h = cfg.hierarchy(&tw.segment)?;
            let specs = cfg.specs(&h);
            let stage = stage.unwrap_or(cfg.build.stages);
            let mut r = Report::new("audit eager", json!({ "run": cfg, "stage": stage }));
            let mut levels = Vec::new();
            for lvl in tw.descending().filter(|l| l.above.is_some()) {
                let e = audit_eager(lvl.tree(), &specs(&lvl.notation).targets, stage)?;
                for (path, j) in &e.undecided {
                    r.undecided
                        .push(format!("{}: {path} target {j}", lvl.notation));
                }
                levels
                    .push(json!({ "level": lvl.notation, "pairs": e.pairs, "decided": e.decided }));
            }
            r.budget("stage", stage);
            r.data = json!({ "levels": levels });
            finish(&r, Some(dir.join("eager.json")))
        }
        Command::Extract { dir, path, depth } => {
            let cfg = RunConfig::load(&dir)?;
            let tw = read_tower_dump(cfg.segment()?, &dir)?;
            let top_path = match path {
                Some(text) => FingerString(
                    text.split(',')
                        .filter(|t| !t.trim().is_empty())
                        .map(|t| t.trim().parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| CliError::Input(format!("--path: {e}")))?,
                ),
                None => {
                    let t = tw.level(tw.top()).tree();
                    let ext = t.extendable_nodes();
                    let longest = ext.iter().map(|s| s.len()).max().unwrap_or(0);
                    ext.into_iter()
                        .find(|s| s.len() == longest)
                        .ok_or_else(|| {
                            CliError::Input("top level has no extendable string".into())
                        })?
                }
            };
            let root = extract_root(&tw, &FiniteFunction(top_path.0.clone()), depth)?;
            println!("{top_path} -> {:?}", root.values());
            if let Some(p) = in_out("extract.json") {
                write_json(
                    &p,
                    &json!({ "top_path": top_path.to_string(), "root": root.values() }),
                )?;
            }
            Ok(0)
        }
        Command::Independent {
            k,
            requirements,
            stages,
            length,
            step_budget,
        } => {
            if k < 2 {
                return Err(CliError::Input("k must be at least 2".into()));
            }
            let fc = FamilyConfig {
                requirements,
                stages,
                length,
                step_budget,
                oracle: None,
            };
            let specs: Vec<&dyn ExclusionSpec> = vec![&OpenSpec; k];
            let (funcs, log) = build_independent_family(k, &specs, &fc)?;
            let mut r = Report::new(
                "independent",
                json!({ "k": k, "requirements": requirements, "stages": stages, "length": length, "step_budget": step_budget }),
            );
            for q in &log.requirements {
                r.push(Check::boolean(
                    &format!(
                        "requirement {} (function {}, program {})",
                        q.index, q.function, q.program
                    ),
                    q.met && q.certificate.is_some(),
                    1,
                    if q.met {
                        vec![]
                    } else {
                        vec![format!("{} injuries", q.injuries)]
                    },
                ));
            }
            r.budget("stages", log.stages);
            r.data = json!({ "functions": funcs.iter().map(|f| f.values().to_vec()).collect::<Vec<_>>(), "log": log });
            finish(&r, in_out("independent.json"))
        }
        Command::Acceptance { criterion } => {
            let ns: Vec<u32> = match criterion {
                Some(n) if (1..=11).contains(&n) => vec![n],
                Some(n) => {
                    return Err(CliError::Input(format!(
                        "no criterion {n}; expected 1..=11"
                    )))
                }
                None => (1..=11).collect(),
            };
            let mut reports = Vec::new();
            let mut code = 0;
            for n in ns {
                let r = scenarios::criterion(n)?;
                code = code.max(finish(&r, in_out(&format!("criterion-{n:02}.json")))?);
                reports.push(r);
            }
            if criterion.is_none() {
                let r = scenarios::determinism(&reports)?;
                code = code.max(finish(&r, in_out("criterion-12.json"))?);
            }
            Ok(code)
        }
    }
}

fn push_audit(r: &mut Report, a: &crate::tower::TowerAudit) {
    r.push(Check::from_part("copying", &a.copying));
    r.push(Check::from_part("monotone", &a.monotone));
    r.push(Check::from_part("identity below copylen", &a.identity));
    r.push(Check::from_part("images in tree", &a.images_in_tree));
    r.push(Check::from_part(
        "permanent decisions",
        &a.permanent_decisions,
    ));
    r.push(Check::from_part("injury bound", &a.injury_bound));
}
