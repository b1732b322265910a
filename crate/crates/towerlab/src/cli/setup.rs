//! Run configurations shared by the subcommands and the acceptance
//! scenarios. A configuration is saved as `run.json` next to a tower dump so
//! that later commands can rebuild the segment, oracles and targets.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hierarchy::{
    mock_family, simulated_family, MockFamilyConfig, ModulusHierarchy, OracleFamily,
};
use crate::machine::JumpMachine;
use crate::nicety::{nicify_covering, nicify_with, Materialize, NiceSegment};
use crate::notation::Notation;
use crate::tower::{
    build_tower, residue_targets, two_path_seed, BuildConfig, LevelSpec, Tower, Variant, XiProbe,
};
use crate::trees::{LevelTree, MockPhi};

use super::CliError;

pub const RUN_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    /// Stagewise jumps of the toy machine, finite levels only.
    Simulated,
    Mock(MockFamilyConfig),
}

impl OracleMode {
    /// `simulated`, `mock`, or `mock:FILE` with a JSON mock configuration.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.split_once(':') {
            None if text == "simulated" => Ok(OracleMode::Simulated),
            None if text == "mock" => Ok(OracleMode::Mock(MockFamilyConfig::default())),
            Some(("mock", file)) => {
                let raw = std::fs::read_to_string(file)
                    .map_err(|e| CliError::Input(format!("{file}: {e}")))?;
                let cfg = serde_json::from_str(&raw)
                    .map_err(|e| CliError::Input(format!("{file}: {e}")))?;
                Ok(OracleMode::Mock(cfg))
            }
            _ => Err(CliError::Input(format!(
                "unknown oracle mode {text:?}; expected simulated, mock or mock:FILE"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedShape {
    FullBinary,
    TwoPath,
}

impl SeedShape {
    pub fn tree(self, depth: usize) -> LevelTree {
        match self {
            SeedShape::FullBinary => LevelTree::full_binary(depth),
            SeedShape::TwoPath => two_path_seed(depth),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: Notation,
    pub materialize: Materialize,
    pub seed: SeedShape,
    pub build: BuildConfig,
    /// Residue targets per level.
    pub targets: usize,
    pub oracle: OracleMode,
    /// Stage budget for settle probes in the hierarchy.
    pub probe_budget: u64,
}

impl RunConfig {
    pub fn new(alpha: Notation) -> Self {
        RunConfig {
            alpha,
            materialize: Materialize::default(),
            seed: SeedShape::FullBinary,
            build: BuildConfig::default(),
            targets: 4,
            oracle: OracleMode::Simulated,
            probe_budget: 4096,
        }
    }

    pub fn segment(&self) -> Result<Arc<NiceSegment>, CliError> {
        Ok(Arc::new(nicify_with(&self.alpha, &self.materialize)?))
    }

    /// Oracles for every successor `b + 1` with `b` a level of `seg`.
    pub fn family(&self, seg: &NiceSegment) -> Result<(Arc<NiceSegment>, OracleFamily), CliError> {
        let cover: Vec<Notation> = seg.nodes().iter().map(|n| n.base.succ()).collect();
        let hseg = Arc::new(nicify_covering(
            &self.alpha.succ(),
            &self.materialize,
            &cover,
        )?);
        let fam = match &self.oracle {
            OracleMode::Simulated => {
                let top = hseg
                    .nodes()
                    .iter()
                    .filter_map(|n| n.base.as_finite())
                    .max()
                    .unwrap_or(0);
                let max_level = top.min(u32::MAX as u64) as u32;
                let stages = self.build.stages.max(self.probe_budget);
                simulated_family(
                    &hseg,
                    Arc::new(JumpMachine::new(max_level, stages)),
                    max_level,
                )
            }
            OracleMode::Mock(cfg) => mock_family(&hseg, cfg),
        };
        Ok((hseg, fam))
    }

    pub fn hierarchy(&self, seg: &NiceSegment) -> Result<Arc<ModulusHierarchy>, CliError> {
        let (hseg, fam) = self.family(seg)?;
        Ok(Arc::new(ModulusHierarchy::new(
            hseg,
            fam,
            self.probe_budget,
        )))
    }

    /// Per-level inputs: residue targets against the oracle one above the
    /// level, the mock functionals for padded builds, and the hierarchy for
    /// small builds.
    pub fn specs(&self, h: &Arc<ModulusHierarchy>) -> Box<dyn Fn(&Notation) -> LevelSpec> {
        let h = Arc::clone(h);
        let targets = self.targets;
        let variant = self.build.variant;
        Box::new(move |b: &Notation| {
            let oracle = h.oracles().get(&b.succ()).cloned();
            LevelSpec {
                targets: residue_targets(targets, oracle.clone()),
                phi: (variant == Variant::Alt1).then(|| Arc::new(MockPhi) as _),
                xi: (variant == Variant::Small).then(|| XiProbe::Hierarchy {
                    h: Arc::clone(&h),
                    beta: b.succ(),
                }),
                oracle,
            }
        })
    }

    pub fn build(&self) -> Result<Built, CliError> {
        let segment = self.segment()?;
        let hierarchy = self.hierarchy(&segment)?;
        let specs = self.specs(&hierarchy);
        let seed = self.seed.tree(self.build.depth);
        let tower = build_tower(segment, &seed, &specs, &self.build)?;
        Ok(Built { tower, hierarchy })
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join(RUN_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(RUN_FILE);
        let raw = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

pub struct Built {
    pub tower: Tower,
    pub hierarchy: Arc<ModulusHierarchy>,
}
