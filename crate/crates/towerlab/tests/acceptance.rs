//! Acceptance suite: one line per criterion, then a nonzero exit if any
//! criterion misses its expectation.
//!
//! Two criteria contain a required check that is known to fail. Those checks
//! are expected to fail exactly as described in `KNOWN_DEVIATIONS`; if one
//! starts passing, or another check fails, the suite fails.

use std::process::ExitCode;
use std::time::Instant;

use towerlab::cli::report::Report;
use towerlab::cli::scenarios::{criterion, determinism, CRITERIA};

/// `(criterion, check name, description)`.
const KNOWN_DEVIATIONS: [(u32, &str, &str); 2] = [
    (
        2,
        "raw w^2 control fails between-reachability at w+1",
        "the raw Cantor normal form system below w^2 is itself nice, so no witness exists",
    ),
    (
        10,
        "rank law: translation is sigma-1 one level down",
        "pi formulas translate to pi-1, not sigma-1, one level down",
    ),
];

fn expected_failures(n: u32) -> Vec<&'static str> {
    KNOWN_DEVIATIONS
        .iter()
        .filter(|d| d.0 == n)
        .map(|d| d.1)
        .collect()
}

/// Extra conditions on how a known deviation fails.
fn deviation_shape(n: u32, r: &Report) -> Result<(), String> {
    match n {
        2 => {
            let c = r
                .check(KNOWN_DEVIATIONS[0].1)
                .ok_or("control check missing")?;
            if c.checked == 0 || !c.witnesses.is_empty() {
                return Err(format!(
                    "control should check targets and find no witness: {c:?}"
                ));
            }
            let informational = r
                .check("raw w^w control fails unique minimal paths")
                .ok_or("w^w control missing")?;
            if !informational.pass {
                return Err("raw w^w control no longer fails".into());
            }
        }
        10 => {
            let c = r
                .check(KNOWN_DEVIATIONS[1].1)
                .ok_or("rank law check missing")?;
            if c.witnesses.is_empty()
                || !c
                    .witnesses
                    .iter()
                    .all(|w| w.starts_with('Π') && w.contains("to Π1"))
            {
                return Err(format!(
                    "rank law should fail only on pi formulas: {:?}",
                    c.witnesses
                ));
            }
            for name in [
                "translation keeps the class at one level down",
                "translation is sigma-1 at the formula's own level",
            ] {
                if !r.check(name).is_some_and(|c| c.pass) {
                    return Err(format!("{name} failed"));
                }
            }
        }
        _ => {}
    }
    Ok(())
}

fn judge(n: u32, r: &Report) -> Result<(), String> {
    let mut got: Vec<&str> = r.failures.iter().map(String::as_str).collect();
    let mut want = expected_failures(n);
    got.sort_unstable();
    want.sort_unstable();
    if got != want {
        return Err(format!("failed checks {got:?}, expected {want:?}"));
    }
    deviation_shape(n, r)
}

fn main() -> ExitCode {
    // Under `cargo test -- --list` and friends, stay quiet.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut ok = true;
    let mut reports = Vec::new();
    for &(n, title, limit) in &CRITERIA[..11] {
        let start = Instant::now();
        let res = criterion(n);
        let took = start.elapsed();
        let verdict: Result<(), String> = match &res {
            Err(e) => Err(format!("error: {e}")),
            Ok(r) => judge(n, r).and_then(|()| {
                if took <= limit {
                    Ok(())
                } else {
                    Err(format!("took {took:.2?}, limit {limit:?}"))
                }
            }),
        };
        let label = if expected_failures(n).is_empty() {
            "PASS"
        } else {
            "FAIL (expected, known deviation)"
        };
        match &verdict {
            Ok(()) => println!("criterion {n:>2} {label} {title} [{took:.2?}]"),
            Err(why) => {
                ok = false;
                println!("criterion {n:>2} FAIL (unexpected) {title} [{took:.2?}]: {why}");
            }
        }
        if let Ok(r) = res {
            reports.push(r);
        }
    }

    let (n, title, limit) = CRITERIA[11];
    let start = Instant::now();
    let verdict = if reports.len() < 11 {
        Err("an earlier criterion errored".to_string())
    } else {
        match determinism(&reports) {
            Ok(r) if r.pass() => Ok(()),
            Ok(r) => Err(format!("{:?}", r.failures)),
            Err(e) => Err(format!("error: {e}")),
        }
    };
    let took = start.elapsed();
    match verdict.and_then(|()| {
        if took <= limit {
            Ok(())
        } else {
            Err(format!("took {took:.2?}"))
        }
    }) {
        Ok(()) => println!("criterion {n:>2} PASS {title} [{took:.2?}]"),
        Err(why) => {
            ok = false;
            println!("criterion {n:>2} FAIL {title} [{took:.2?}]: {why}");
        }
    }

    for (n, check, why) in KNOWN_DEVIATIONS {
        println!("known deviation, criterion {n}: {check:?} fails because {why}");
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
