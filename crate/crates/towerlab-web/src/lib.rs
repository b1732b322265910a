//! Browser bindings for a few towerlab operations. Every export takes plain
//! strings and numbers and returns a JSON string, so the page needs no glue
//! beyond `JSON.parse`.

use serde_json::{json, Value};
use towerlab::cli::setup::{OracleMode, RunConfig};
use towerlab::nicety::{Materialize, PartResult};
use towerlab::notation::Notation;
use wasm_bindgen::prelude::*;

/// Largest segment the page may ask for.
const MAX_NODES: usize = 2048;

fn notation(text: &str) -> Result<Notation, String> {
    text.parse().map_err(|e| format!("{e}"))
}

fn config(alpha: &str, oracle: &str) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::new(notation(alpha)?);
    cfg.oracle = OracleMode::parse(oracle).map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// The nice segment below `alpha`, with each node's address and copy length.
pub fn segment_json(alpha: &str, width: usize) -> Result<Value, String> {
    let mut cfg = config(alpha, "mock")?;
    cfg.materialize = Materialize {
        width: width.clamp(1, 64),
        max_nodes: MAX_NODES,
    };
    let seg = cfg.segment().map_err(|e| e.to_string())?;
    serde_json::to_value(seg.to_dump()).map_err(|e| e.to_string())
}

/// `xi^b(x)` for every `b` in the segment below `alpha` and `x < len`.
/// Values the probe budget cannot settle come back as `null`.
pub fn xi_table_json(alpha: &str, len: u64, oracle: &str, probe: u64) -> Result<Value, String> {
    let mut cfg = config(alpha, oracle)?;
    cfg.materialize = Materialize {
        width: 4,
        max_nodes: 64,
    };
    cfg.probe_budget = probe.max(1);
    let seg = cfg.segment().map_err(|e| e.to_string())?;
    let h = cfg.hierarchy(&seg).map_err(|e| e.to_string())?;
    let rows: Vec<Value> = seg
        .ascending()
        .iter()
        .map(|&id| {
            let b = seg.base(id);
            let values: Vec<Option<u64>> = (0..len.min(32)).map(|x| h.xi(b, x).ok()).collect();
            json!({ "beta": b.to_string(), "values": values })
        })
        .collect();
    Ok(json!({ "alpha": alpha, "rows": rows }))
}

fn part(p: &PartResult) -> Value {
    json!({ "pass": p.pass, "checked": p.checked, "witnesses": p.witnesses.iter().take(3).collect::<Vec<_>>() })
}

/// Builds a tower over a full binary seed tree and summarizes each level.
pub fn tower_json(alpha: &str, depth: usize, stages: u64, oracle: &str) -> Result<Value, String> {
    let mut cfg = config(alpha, oracle)?;
    cfg.build.depth = depth.clamp(1, 10);
    cfg.build.stages = stages.clamp(1, 5000);
    let built = cfg.build().map_err(|e| e.to_string())?;
    let tw = &built.tower;
    let levels: Vec<Value> = tw
        .descending()
        .map(|l| {
            json!({
                "notation": l.notation.to_string(),
                "copylen": l.copylen,
                "nodes": l.tree().len(),
                "changes": l.theta().changes.len(),
                "injuries": l.theta().injuries.len(),
            })
        })
        .collect();
    let a = towerlab::tower::audit_tower(tw);
    Ok(json!({
        "levels": levels,
        "audit": {
            "pass": a.pass(),
            "copying": part(&a.copying),
            "monotone": part(&a.monotone),
            "identity below copylen": part(&a.identity),
            "images in tree": part(&a.images_in_tree),
            "permanent decisions": part(&a.permanent_decisions),
            "injury bound": part(&a.injury_bound),
        },
    }))
}

fn export(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn segment(alpha: &str, width: usize) -> Result<String, JsError> {
    export(segment_json(alpha, width))
}

#[wasm_bindgen]
pub fn xi_table(alpha: &str, len: u64, oracle: &str, probe: u64) -> Result<String, JsError> {
    export(xi_table_json(alpha, len, oracle, probe))
}

#[wasm_bindgen]
pub fn tower(alpha: &str, depth: usize, stages: u64, oracle: &str) -> Result<String, JsError> {
    export(tower_json(alpha, depth, stages, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_lists_copylens() {
        let v = segment_json("w*2", 8).unwrap();
        let nodes = v["nodes"].as_array().unwrap();
        let w3 = nodes.iter().find(|n| n["base"] == "w+3").unwrap();
        assert_eq!(w3["copylen"], 3);
        assert!(segment_json("w^", 8).is_err());
    }

    #[test]
    fn xi_rows_start_at_zero() {
        let v = xi_table_json("2", 6, "mock", 400).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows[0]["beta"], "0");
        assert!(rows[0]["values"].as_array().unwrap().iter().all(|x| x == 0));
        assert_eq!(rows.len(), 3);
    }

    #[test]
    fn small_tower_passes_its_audit() {
        let v = tower_json("2", 4, 200, "simulated").unwrap();
        assert_eq!(v["levels"].as_array().unwrap().len(), 3);
        assert_eq!(v["audit"]["pass"], true);
    }
}
