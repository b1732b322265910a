//! The acceptance scenarios, one deterministic [`Report`] per criterion.
//! Reports never contain timings so that repeated runs compare byte for byte;
//! callers time them.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::formulas::{
    forcing_transfer, rank, rank_over, regression_suite, translate, Class, OracleSet, Rank, Side,
};
use crate::hierarchy::{
    koenig_extract, mock_family, FiniteFunction, KoenigError, MockFamilyConfig, ModulusHierarchy,
};
use crate::machine::JumpMachine;
use crate::nicety::{
    copylen_along, copylen_laws, is_nice, lex_compare, nicify, nicify_with, EnumTree, Materialize,
    NiceSegment, NodeKind, PartResult, RawCnf,
};
use crate::notation::{compare, parse_notation, try_code_of, Notation};
use crate::tower::{
    audit_eager, audit_tower, build_independent_family, homeomorphism_check, recover_jump_bound,
    treemap, ErasingSpec, ExclusionSpec, FamilyConfig, OpenSpec, Tower, Variant,
};
use crate::trees::{
    verify_structure, FingerString, LevelTree, MockPhi, Predicate, StructureInputs,
};

use super::report::{Check, Report};
use super::setup::{OracleMode, RunConfig, SeedShape};
use super::CliError;

/// The segments of criteria 1 to 3.
pub const ALPHAS: [&str; 5] = ["w", "w*2", "w^2", "w^2+w*3+2", "w^3"];

/// `(criterion, title, time limit)`.
pub const CRITERIA: [(u32, &str, Duration); 12] = [
    (
        1,
        "order matches enumeration addresses",
        Duration::from_secs(10),
    ),
    (2, "niceness of nicified segments", Duration::from_secs(10)),
    (3, "copylen laws", Duration::from_secs(5)),
    (4, "tower build invariants", Duration::from_secs(60)),
    (5, "variant structure predicates", Duration::from_secs(30)),
    (6, "homeomorphism surrogate", Duration::from_secs(60)),
    (7, "hierarchy monotonicity", Duration::from_secs(5)),
    (8, "uniform modulus extraction", Duration::from_secs(30)),
    (9, "jump bound recovery", Duration::from_secs(10)),
    (
        10,
        "translation rank law and forcing transfer",
        Duration::from_secs(30),
    ),
    (11, "independent family", Duration::from_secs(30)),
    (12, "determinism", Duration::from_secs(300)),
];

pub fn command_name(n: u32) -> String {
    format!("acceptance/criterion-{n}")
}

/// Runs criterion `n` in `1..=11`. Criterion 12 compares two runs of the
/// others; see [`determinism`].
pub fn criterion(n: u32) -> Result<Report, CliError> {
    match n {
        1 => order_theorem(),
        2 => niceness(),
        3 => copylen(),
        4 => tower_build(),
        5 => variants(),
        6 => homeomorphism(),
        7 => hierarchy_monotone(),
        8 => modulus_extraction(),
        9 => jump_bound(),
        10 => translation(),
        11 => independent(),
        _ => Err(CliError::Input(format!(
            "no criterion {n}; expected 1..=11"
        ))),
    }
}

/// Reruns criteria 1 to 11 and compares each report with `first`.
pub fn determinism(first: &[Report]) -> Result<Report, CliError> {
    let mut r = Report::new(&command_name(12), json!({ "criteria": first.len() }));
    for (i, a) in first.iter().enumerate() {
        let n = i as u32 + 1;
        let b = criterion(n)?;
        let same = a.to_json() == b.to_json();
        let w = if same {
            vec![]
        } else {
            vec![format!("criterion {n} reports differ")]
        };
        r.push(Check::boolean(
            &format!("criterion {n} byte-identical"),
            same,
            1,
            w,
        ));
    }
    Ok(r)
}

fn alpha(text: &str) -> Result<Notation, CliError> {
    Ok(parse_notation(text)?)
}

/// Widths for criteria 1 and 2: a wide fragment reaches 500 notations even
/// below `w`, the narrow one goes deeper below large notations.
const WIDTHS: [usize; 2] = [500, 8];

fn segments(text: &str) -> Result<Vec<(String, NiceSegment)>, CliError> {
    let a = alpha(text)?;
    WIDTHS
        .iter()
        .map(|&width| {
            let m = Materialize {
                width,
                max_nodes: 500,
            };
            Ok((format!("{text} width {width}"), nicify_with(&a, &m)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Order and addresses

fn order_theorem() -> Result<Report, CliError> {
    let mut r = Report::new(
        &command_name(1),
        json!({ "alphas": ALPHAS, "widths": WIDTHS, "nodes": 500 }),
    );
    let mut sizes = BTreeMap::new();
    for (a, seg) in ALPHAS
        .iter()
        .map(|a| segments(a))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
    {
        let ids = seg.first_materialized(500);
        sizes.insert(a.clone(), ids.len());

        let mut order = PartResult::new();
        for (k, &i) in ids.iter().enumerate() {
            for &j in &ids[k + 1..] {
                order.checked += 1;
                let by_value = compare(seg.base(i), seg.base(j));
                let by_address = lex_compare(&seg.node(i).address, &seg.node(j).address);
                if by_value != by_address {
                    order.fail(format!(
                        "{} vs {}: order {by_value:?}, addresses {by_address:?}",
                        seg.base(i),
                        seg.base(j)
                    ));
                }
            }
        }
        r.push(Check::from_part(
            &format!("{a}: order agrees with addresses"),
            &order,
        ));

        let mut tree = EnumTree::new(seg.top_base().clone(), 1 << 16);
        let mut addr = PartResult::new();
        for &i in &ids {
            addr.checked += 1;
            let seq = tree.enumseq(seg.base(i))?;
            if seq != seg.node(i).address {
                addr.fail(format!(
                    "{}: enumseq differs from the segment address",
                    seg.base(i)
                ));
            }
        }
        r.push(Check::from_part(
            &format!("{a}: enumseq reproduces addresses"),
            &addr,
        ));
    }
    r.data = json!({ "materialized": sizes });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 2. Niceness

fn niceness() -> Result<Report, CliError> {
    let mut r = Report::new(
        &command_name(2),
        json!({ "alphas": ALPHAS, "widths": WIDTHS, "nodes": 500, "sample": 500 }),
    );
    for (a, seg) in ALPHAS
        .iter()
        .map(|a| segments(a))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
    {
        let rep = is_nice(&seg, 500);
        r.push(Check::from_part(
            &format!("{a}: unique minimal paths"),
            &rep.unique_minimal_paths,
        ));
        r.push(Check::from_part(
            &format!("{a}: between reachable"),
            &rep.between_reachable,
        ));
        r.push(Check::from_part(
            &format!("{a}: pred chains finite"),
            &rep.pred_chains_finite,
        ));
        r.push(Check::from_part(
            &format!("{a}: partition cross-check"),
            &rep.partition_crosscheck,
        ));
    }

    let m = Materialize {
        width: 8,
        max_nodes: 500,
    };
    let raw = is_nice(&RawCnf::for_alpha(&alpha("w^2")?, &m), 500);
    let part2 = &raw.between_reachable;
    let hit = part2.witnesses.iter().any(|w| w.contains("w+1"));
    r.push(Check::boolean(
        "raw w^2 control fails between-reachability at w+1",
        !part2.pass && hit,
        part2.checked,
        part2.witnesses.clone(),
    ));

    let raw_ww = is_nice(&RawCnf::for_alpha(&alpha("w^w")?, &m), 500);
    let part1 = &raw_ww.unique_minimal_paths;
    r.push(
        Check::boolean(
            "raw w^w control fails unique minimal paths",
            !part1.pass,
            part1.checked,
            part1.witnesses.clone(),
        )
        .info(),
    );
    r.data = json!({ "raw_w2": raw, "raw_ww": raw_ww });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 3. copylen

fn copylen() -> Result<Report, CliError> {
    const ALONG: usize = 65;
    let mut r = Report::new(
        &command_name(3),
        json!({ "alphas": ALPHAS, "materialize": Materialize::default(), "along": ALONG }),
    );
    let mut strict = BTreeMap::new();
    for a in ALPHAS {
        let seg = nicify(&alpha(a)?)?;
        let laws = copylen_laws(&seg);
        r.push(Check::from_part(
            &format!("{a}: recursion"),
            &laws.recursion,
        ));
        r.push(Check::from_part(&format!("{a}: between"), &laws.between));
        r.push(Check::from_part(&format!("{a}: strict between"), &laws.between_strict).info());
        r.push(
            Check::from_part(
                &format!("{a}: strict between at the limit"),
                &laws.between_strict_at_top,
            )
            .info(),
        );
        strict.insert(a, laws.between_strict_at_top.witnesses.clone());

        let mut tree = EnumTree::new(alpha(a)?, 1 << 20);
        let mut grows = PartResult::new();
        for id in 0..seg.len() {
            if seg.node(id).kind != NodeKind::Limit {
                continue;
            }
            grows.checked += 1;
            let lambda = seg.base(id);
            let t = tree.locate(lambda)?;
            let v = copylen_along(&mut tree, t, ALONG)?;
            if v.len() < ALONG || v.windows(2).any(|w| w[0] >= w[1]) {
                grows.fail(format!("{lambda}: copylen along the sequence is {v:?}"));
                continue;
            }
            for (n, &c) in seg.node(id).children.iter().enumerate() {
                if seg.copylen(c) != v[n] {
                    grows.fail(format!(
                        "{lambda}[{n}]: segment {} vs lazy {}",
                        seg.copylen(c),
                        v[n]
                    ));
                }
            }
        }
        r.push(Check::from_part(
            &format!("{a}: copylen unbounded along limits"),
            &grows,
        ));
    }
    r.data = json!({ "strict_at_limit_discrepancies": strict });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 4 and 6. The reference tower

pub fn reference_config() -> RunConfig {
    let mut cfg = RunConfig::new(Notation::finite(2));
    cfg.build.stages = 2000;
    cfg.build.depth = 8;
    cfg.targets = 4;
    cfg.oracle = OracleMode::Simulated;
    cfg
}

fn level_name(tw: &Tower, id: usize) -> String {
    tw.segment.base(id).to_string()
}

fn tower_build() -> Result<Report, CliError> {
    let cfg = reference_config();
    let mut r = Report::new(
        &command_name(4),
        serde_json::to_value(&cfg).expect("config serializes"),
    );
    let built = cfg.build()?;
    let tw = &built.tower;
    let a = audit_tower(tw);
    r.push(Check::from_part("copying", &a.copying));
    r.push(Check::from_part("monotone", &a.monotone));
    r.push(Check::from_part("identity below copylen", &a.identity));
    r.push(Check::from_part("images in tree", &a.images_in_tree));
    r.push(Check::from_part(
        "permanent decisions",
        &a.permanent_decisions,
    ));
    r.push(Check::from_part("injury bound", &a.injury_bound));

    let specs = cfg.specs(&built.hierarchy);
    let (mut pairs, mut decided) = (0, 0);
    let mut levels = Vec::new();
    for lvl in tw.descending().filter(|l| l.above.is_some()) {
        let spec = specs(&lvl.notation);
        let e = audit_eager(lvl.tree(), &spec.targets, cfg.build.stages)?;
        pairs += e.pairs;
        decided += e.decided;
        for (path, j) in &e.undecided {
            r.undecided
                .push(format!("{}: {path} target {j}", lvl.notation));
        }
        levels.push(json!({
            "level": lvl.notation.to_string(),
            "nodes": lvl.tree().len(),
            "extendable": lvl.tree().extendable_nodes().len(),
            "injuries": lvl.theta().injuries.len(),
            "pairs": e.pairs,
            "decided": e.decided,
        }));
    }
    let frac = if pairs == 0 {
        1.0
    } else {
        decided as f64 / pairs as f64
    };
    let w = if frac >= 0.95 {
        vec![]
    } else {
        vec![format!("decided {decided} of {pairs}")]
    };
    r.push(Check::boolean(
        "eager decides at least 95% of pairs",
        frac >= 0.95,
        pairs,
        w,
    ));
    r.budget("stages", cfg.build.stages);
    r.budget("depth", cfg.build.depth as u64);
    r.data = json!({ "levels": levels, "pairs": pairs, "decided": decided });
    Ok(r)
}

fn homeomorphism() -> Result<Report, CliError> {
    const DEPTH: usize = 6;
    let cfg = reference_config();
    let mut r = Report::new(
        &command_name(6),
        json!({ "run": serde_json::to_value(&cfg).expect("config serializes"), "depth": DEPTH }),
    );
    let tw = cfg.build()?.tower;
    for lvl in tw.descending() {
        let Some(above) = lvl.above else { continue };
        let rep = homeomorphism_check(tw.level(above).tree(), lvl.tree(), lvl.theta(), DEPTH);
        let name = format!("{} -> {}", level_name(&tw, above), lvl.notation);
        r.push(Check::from_part(&format!("{name}: into"), &rep.into));
        r.push(Check::from_part(&format!("{name}: onto"), &rep.onto));
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// 5. Variant predicates

fn variant_config(variant: Variant) -> RunConfig {
    let mut cfg = RunConfig::new(Notation::finite(2));
    cfg.build.variant = variant;
    cfg.build.stages = 600;
    cfg.build.depth = 6;
    cfg.targets = 2;
    cfg.oracle = OracleMode::Mock(MockFamilyConfig::default());
    cfg
}

fn fs(v: &[u64]) -> FingerString {
    FingerString(v.to_vec())
}

fn only(report: &BTreeMap<Predicate, PartResult>, p: Predicate) -> PartResult {
    report.get(&p).cloned().unwrap_or_default()
}

/// A required check that passes when the predicate rejects a scripted
/// violation with a witness.
fn detects(name: &str, part: &PartResult) -> Check {
    Check::boolean(
        name,
        !part.pass && !part.witnesses.is_empty(),
        part.checked,
        part.witnesses.clone(),
    )
}

fn variants() -> Result<Report, CliError> {
    let alt1 = variant_config(Variant::Alt1);
    let small = variant_config(Variant::Small);
    let mut r = Report::new(
        &command_name(5),
        json!({
            "alt1": serde_json::to_value(&alt1).expect("config serializes"),
            "small": serde_json::to_value(&small).expect("config serializes"),
        }),
    );

    let tw = alt1.build()?.tower;
    for lvl in tw.descending() {
        let Some(above) = lvl.above else { continue };
        let inputs = StructureInputs {
            theta: Some(&lvl.theta().final_map),
            domain: Some(tw.level(above).tree()),
            phi: Some(&MockPhi),
            phi_budget: alt1.build.stages,
            copylen: lvl.copylen,
            ..Default::default()
        };
        let rep = verify_structure(
            lvl.tree(),
            &inputs,
            &[Predicate::Padded, Predicate::Disagreement],
        )?;
        r.push(Check::from_part(
            &format!("alt1 {}: padded", lvl.notation),
            &only(&rep, Predicate::Padded),
        ));
        r.push(Check::from_part(
            &format!("alt1 {}: disagreement", lvl.notation),
            &only(&rep, Predicate::Disagreement),
        ));
    }

    let built = small.build()?;
    let tw = built.tower;
    for lvl in tw.descending() {
        if lvl.above.is_none() {
            continue;
        }
        let up = lvl.notation.succ();
        let xi = FiniteFunction(
            (0..small.build.depth as u64)
                .map(|x| built.hierarchy.xi_approx(&up, x, small.build.stages))
                .collect::<Result<_, _>>()?,
        );
        let inputs = StructureInputs {
            theta: Some(&lvl.theta().final_map),
            xi_probe: Some(&xi),
            ..Default::default()
        };
        let rep = verify_structure(
            lvl.tree(),
            &inputs,
            &[Predicate::Largeness, Predicate::UniquelySmall],
        )?;
        r.push(Check::from_part(
            &format!("small {}: largeness", lvl.notation),
            &only(&rep, Predicate::Largeness),
        ));
        r.push(Check::from_part(
            &format!("small {}: uniquely small", lvl.notation),
            &only(&rep, Predicate::UniquelySmall),
        ));
    }

    // Scripted violations.
    let single = LevelTree::full(1, 4);
    let rep = verify_structure(&single, &StructureInputs::default(), &[Predicate::Padded])?;
    r.push(detects(
        "control: a single path is not padded",
        &only(&rep, Predicate::Padded),
    ));

    let domain = LevelTree::full(3, 2);
    let theta: BTreeMap<_, _> = [
        (fs(&[]), fs(&[])),
        (fs(&[0]), fs(&[0, 0])),
        (fs(&[1]), fs(&[0, 2])),
    ]
    .into_iter()
    .collect();
    let inputs = StructureInputs {
        theta: Some(&theta),
        domain: Some(&domain),
        phi: Some(&MockPhi),
        phi_budget: 8,
        ..Default::default()
    };
    let rep = verify_structure(&domain, &inputs, &[Predicate::Disagreement])?;
    r.push(detects(
        "control: agreeing images are not disagreement preserving",
        &only(&rep, Predicate::Disagreement),
    ));

    let theta: BTreeMap<_, _> = [(fs(&[]), fs(&[])), (fs(&[0]), fs(&[3, 1]))]
        .into_iter()
        .collect();
    let inputs = StructureInputs {
        theta: Some(&theta),
        ..Default::default()
    };
    let rep = verify_structure(&domain, &inputs, &[Predicate::Largeness])?;
    r.push(detects(
        "control: a decreasing image is not large",
        &only(&rep, Predicate::Largeness),
    ));

    let two = LevelTree::new([fs(&[0, 9, 9]), fs(&[1, 9, 9])], 3);
    let xi = FiniteFunction(vec![5, 5, 5]);
    let inputs = StructureInputs {
        xi_probe: Some(&xi),
        ..Default::default()
    };
    let rep = verify_structure(&two, &inputs, &[Predicate::UniquelySmall])?;
    r.push(detects(
        "control: two small strings at one length",
        &only(&rep, Predicate::UniquelySmall),
    ));
    Ok(r)
}

// ---------------------------------------------------------------------------
// 7. Hierarchy monotonicity

fn hierarchy_monotone() -> Result<Report, CliError> {
    const MAX_CODE: u64 = 32;
    const MAX_X: u64 = 32;
    const PROBE: u64 = 200;
    let mock = MockFamilyConfig::default();
    let mut r = Report::new(
        &command_name(7),
        json!({ "alpha": "w*2", "mock": mock, "max_code": MAX_CODE, "max_x": MAX_X, "probe": PROBE }),
    );
    let seg = Arc::new(nicify(&alpha("w*2")?)?);
    let h = ModulusHierarchy::new(Arc::clone(&seg), mock_family(&seg, &mock), PROBE);
    let ids: Vec<usize> = seg
        .ascending()
        .iter()
        .copied()
        .filter(|&i| try_code_of(seg.base(i)).is_some_and(|c| c <= MAX_CODE))
        .collect();

    let mut mono = PartResult::new();
    for &g in &ids {
        for &b in &ids {
            if compare(seg.base(g), seg.base(b)).is_ge() {
                continue;
            }
            for x in 0..=MAX_X {
                mono.checked += 1;
                let (vg, vb) = (h.xi_node(g, x)?, h.xi_node(b, x)?);
                if vg > vb {
                    mono.fail(format!(
                        "xi^{}({x}) = {vg} > xi^{}({x}) = {vb}",
                        seg.base(g),
                        seg.base(b)
                    ));
                }
            }
        }
    }
    r.push(Check::from_part("pointwise monotone in the level", &mono));

    let mut stagewise = PartResult::new();
    for &g in &ids {
        for x in 0..=MAX_X {
            stagewise.checked += 1;
            let vals: Vec<u64> = (0..=PROBE)
                .map(|s| h.xi_approx_node(g, x, s))
                .collect::<Result<_, _>>()?;
            let limit = h.xi_node(g, x)?;
            if vals.windows(2).any(|w| w[0] > w[1]) {
                stagewise.fail(format!("xi^{}({x}) decreases between stages", seg.base(g)));
            } else if vals.last() != Some(&limit) {
                stagewise.fail(format!(
                    "xi^{}({x}) has not reached {limit} by stage {PROBE}",
                    seg.base(g)
                ));
            }
        }
    }
    r.push(Check::from_part(
        "stagewise non-decreasing and convergent",
        &stagewise,
    ));
    r.budget("probe", PROBE);
    r.data = json!({ "levels": ids.iter().map(|&i| seg.base(i).to_string()).collect::<Vec<_>>() });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 8. Extraction by König search

fn modulus_extraction() -> Result<Report, CliError> {
    const HORIZON: u64 = 24;
    const DEPTH: usize = 8;
    const SAMPLES: usize = 20;
    const SEED: u64 = 12;
    let mut r = Report::new(
        &command_name(8),
        json!({ "level": 1, "horizon": HORIZON, "depth": DEPTH, "samples": SAMPLES, "seed": SEED }),
    );
    let seg = Arc::new(nicify(&Notation::finite(2))?);
    let machine = Arc::new(JumpMachine::new(1, 4096));
    let fam = crate::hierarchy::simulated_family(&seg, machine, 1);
    let h = ModulusHierarchy::new(seg, fam, 4096);
    let one = Notation::one();
    let xi = h.xi_prefix(&one, HORIZON)?;
    let want = xi.prefix(DEPTH);

    // σ(x) is the settled value at its own stage and has not moved by the
    // later of that stage and |σ|.
    let tree_of = |s: &[u64]| {
        s.iter().enumerate().all(|(x, &v)| {
            let x = x as u64;
            let late = v.max(s.len() as u64);
            h.xi_approx(&one, x, v).is_ok_and(|a| a == v)
                && h.xi_approx(&one, x, late).is_ok_and(|a| a == v)
        })
    };

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut part = PartResult::new();
    for k in 0..SAMPLES {
        let f = FiniteFunction(
            xi.values()
                .iter()
                .map(|&v| v + rng.gen_range(0..=3))
                .collect(),
        );
        part.checked += 1;
        match koenig_extract(&f, &tree_of, DEPTH) {
            Ok(got) if got == want => {}
            Ok(got) => part.fail(format!("sample {k}: extracted {:?}", got.values())),
            Err(e) => part.fail(format!("sample {k}: {e}")),
        }
    }
    r.push(Check::from_part(
        "extraction returns xi^1 on every majorant",
        &part,
    ));

    let mut low = xi.clone();
    let x = (0..HORIZON as usize)
        .rev()
        .find(|&x| low.0[x] > 0)
        .unwrap_or(0);
    low.0[x] = low.0[x].saturating_sub(1);
    let res = koenig_extract(&low, &tree_of, DEPTH);
    r.push(Check::boolean(
        "a bound below xi^1 leaves no path",
        matches!(res, Err(KoenigError::Empty)),
        1,
        vec![format!("lowered at x={x}: {res:?}")],
    ));
    r.data = json!({ "xi": xi.values(), "extracted": want.values() });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 9. Jump bound recovery

pub fn two_path_config() -> RunConfig {
    let mut cfg = RunConfig::new(Notation::one());
    cfg.seed = SeedShape::TwoPath;
    cfg.build.variant = Variant::Small;
    cfg.build.stages = 2000;
    cfg.build.depth = 20;
    cfg.targets = 0;
    cfg.oracle = OracleMode::Mock(MockFamilyConfig::default());
    cfg
}

fn jump_bound() -> Result<Report, CliError> {
    const MAX_X: usize = 16;
    let cfg = two_path_config();
    let mut r = Report::new(
        &command_name(9),
        json!({ "run": serde_json::to_value(&cfg).expect("config serializes"), "max_x": MAX_X }),
    );
    let built = cfg.build()?;
    let tw = &built.tower;
    let (top, bottom) = (tw.top(), tw.bottom());
    let d = cfg.build.depth;
    let g = treemap(tw, top, bottom, &FingerString(vec![0; d]))?;
    let z = treemap(tw, top, bottom, &FingerString(vec![1; d]))?;
    let y =
        g.0.iter()
            .zip(&z.0)
            .position(|(a, b)| a != b)
            .unwrap_or(g.len().min(z.len()));
    let beta = tw.segment.base(bottom).succ();
    let xi = built.hierarchy.xi_prefix(&beta, MAX_X as u64 + 1)?;

    let both = FiniteFunction(g.0.iter().zip(&z.0).map(|(a, b)| *a.max(b)).collect());
    let mut bound = PartResult::new();
    let mut recovered = Vec::new();
    for x in y + 1..=MAX_X {
        bound.checked += 1;
        match recover_jump_bound(tw, top, &both, y, x) {
            Ok(v) if v >= xi.0[x] => recovered.push(v),
            Ok(v) => bound.fail(format!("x={x}: recovered {v} < {}", xi.0[x])),
            Err(e) => bound.fail(format!("x={x}: {e}")),
        }
    }
    r.push(Check::from_part("recovered bound majorizes xi", &bound));

    let one_path = FiniteFunction(g.0.clone());
    let flagged: Vec<String> = (y + 1..=MAX_X)
        .filter_map(|x| match recover_jump_bound(tw, top, &one_path, y, x) {
            Ok(v) if v >= xi.0[x] => None,
            Ok(v) => Some(format!("x={x}: {v} < {}", xi.0[x])),
            Err(e) => Some(format!("x={x}: {e}")),
        })
        .collect();
    r.push(Check::boolean(
        "a bound on one path only is flagged",
        !flagged.is_empty(),
        (MAX_X - y) as u64,
        flagged,
    ));

    let inputs = StructureInputs {
        xi_probe: Some(&xi),
        ..Default::default()
    };
    let rep = verify_structure(
        tw.level(bottom).tree(),
        &inputs,
        &[Predicate::UniquelySmall],
    )?;
    r.push(Check::from_part(
        "bottom tree is uniquely small",
        &only(&rep, Predicate::UniquelySmall),
    ));
    r.data = json!({
        "paths": [g.to_string(), z.to_string()],
        "split": y,
        "xi": xi.values(),
        "recovered": recovered,
    });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 10. Translation

fn rank_is(r: Rank, class: Class, level: u32) -> bool {
    r.class == class && r.level == level
}

fn translation() -> Result<Report, CliError> {
    let cfg = reference_config();
    let mut r = Report::new(
        &command_name(10),
        json!({ "run": serde_json::to_value(&cfg).expect("config serializes"), "suite": 30 }),
    );
    let built = cfg.build()?;
    let tw = &built.tower;
    let suite = regression_suite();

    let mut literal = PartResult::new();
    let mut same_side = PartResult::new();
    let mut next_level = PartResult::new();
    let mut table = Vec::new();
    for f in &suite {
        let rk = rank(f);
        if rk.level == 0 {
            continue;
        }
        let beta = Notation::finite(rk.level as u64 - 1);
        let t = translate(f, &beta, tw, Side::Direct)?;
        let got = rank_over(&t, &beta);
        literal.checked += 1;
        if !(got.is_bounded() || rank_is(got, Class::Sigma, 1)) {
            literal.fail(format!("{rk} formula {f} translates to {got} over {beta}"));
        }
        same_side.checked += 1;
        if !rank_is(got, rk.class, 1) {
            same_side.fail(format!("{rk} formula {f} translates to {got} over {beta}"));
        }
        let mut row = json!({ "formula": f.to_string(), "rank": rk.to_string(), "at": beta.to_string(), "translated": got.to_string() });
        let up = Notation::finite(rk.level as u64);
        if tw.segment.lookup(&up).is_some() {
            let t2 = translate(f, &up, tw, Side::Direct)?;
            let got2 = rank_over(&t2, &up);
            next_level.checked += 1;
            if !(got2.is_bounded() || rank_is(got2, Class::Sigma, 1)) {
                next_level.fail(format!("{rk} formula {f} translates to {got2} over {up}"));
            }
            row["one_up"] = json!(got2.to_string());
        }
        table.push(row);
    }
    r.push(Check::from_part(
        "rank law: translation is sigma-1 one level down",
        &literal,
    ));
    r.push(Check::from_part(
        "translation keeps the class at one level down",
        &same_side,
    ));
    r.push(Check::from_part(
        "translation is sigma-1 at the formula's own level",
        &next_level,
    ));

    let (_, fam) = cfg.family(&tw.segment)?;
    let oracles = OracleSet::new(
        [1u64, 2]
            .iter()
            .filter_map(|&k| fam.get(&Notation::finite(k)).cloned()),
        cfg.build.stages,
    );
    let mut transfer = serde_json::Map::new();
    for side in [Side::Direct, Side::Flipped] {
        let rep = forcing_transfer(tw, &suite, &oracles, side, cfg.build.depth)?;
        let name = format!("{side:?}").to_lowercase();
        r.push(Check::boolean(
            &format!("forcing transfer, {name} side: no conflicts"),
            rep.conflicts.is_empty(),
            rep.compared,
            rep.conflicts
                .iter()
                .take(16)
                .map(|c| format!("{c:?}"))
                .collect(),
        ));
        transfer.insert(
            name,
            json!({ "compared": rep.compared, "decided": rep.decided }),
        );
    }
    r.data = json!({ "ranks": table, "transfer": transfer });
    Ok(r)
}

// ---------------------------------------------------------------------------
// 11. Independent family

fn independent() -> Result<Report, CliError> {
    let cfg = FamilyConfig::default();
    let mut r = Report::new(
        &command_name(11),
        json!({
            "k": 3,
            "requirements": cfg.requirements,
            "stages": cfg.stages,
            "length": cfg.length,
            "step_budget": cfg.step_budget,
        }),
    );
    let specs: Vec<&dyn ExclusionSpec> = vec![&OpenSpec; 3];
    let (funcs, log) = build_independent_family(3, &specs, &cfg)?;
    let unmet: Vec<String> = log
        .requirements
        .iter()
        .filter(|q| !q.met)
        .map(|q| format!("requirement {}", q.index))
        .collect();
    r.push(Check::boolean(
        "first six requirements met",
        log.met == cfg.requirements && unmet.is_empty(),
        log.requirements.len() as u64,
        unmet,
    ));
    let uncertified: Vec<String> = log
        .requirements
        .iter()
        .filter(|q| q.met && q.certificate.is_none())
        .map(|q| format!("requirement {}", q.index))
        .collect();
    r.push(Check::boolean(
        "every met requirement carries a certificate",
        uncertified.is_empty(),
        log.met as u64,
        uncertified,
    ));

    let erase = ErasingSpec {
        position: 0,
        from_stage: 3,
        below: 100,
    };
    let specs: Vec<&dyn ExclusionSpec> = vec![&erase, &OpenSpec];
    let small = FamilyConfig {
        requirements: 1,
        ..cfg.clone()
    };
    let (_, injured) = build_independent_family(2, &specs, &small)?;
    let q = &injured.requirements[0];
    r.push(Check::boolean(
        "an erased witness is injured and met again",
        q.injuries >= 1 && q.met,
        1,
        vec![format!("injuries {}, met {}", q.injuries, q.met)],
    ));
    r.budget("stages", log.stages);
    r.data = json!({
        "functions": funcs.iter().map(|f| f.values().to_vec()).collect::<Vec<_>>(),
        "log": log,
    });
    Ok(r)
}
