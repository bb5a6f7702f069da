//! Browser demo bindings: parse a 2-D problem, sample and classify its
//! boundary, sweep a Reeb digraph, and run the decomposition verdict — all
//! returned as JSON for a static page to draw.

use ra_region::decomposition::{assemble, TheoremMode};
use ra_region::poly::VarSet;
use ra_region::problem::parse_problem;
use ra_region::reeb::{export_dot, reeb_digraph};
use ra_region::region::{check_definition1, classify_boundary, find_critical_pinned, NFlag};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct RegionView {
    verdict: String,
    conditions: Vec<(String, String)>,
    caveats: Vec<String>,
    members: Vec<[f64; 2]>,
    boundary: Vec<BoundaryView>,
    critical: Vec<CriticalView>,
}

#[derive(Serialize)]
struct BoundaryView {
    point: [f64; 2],
    active: Vec<String>,
    normal: bool,
    flags: Vec<(String, String)>,
}

#[derive(Serialize)]
struct CriticalView {
    point: [f64; 2],
    n_set: String,
}

#[derive(Serialize)]
struct GraphView {
    vertices: Vec<VertexView>,
    edges: Vec<[usize; 2]>,
    warnings: Vec<String>,
    dot: String,
}

#[derive(Serialize)]
struct VertexView {
    value: f64,
    kind: String,
}

fn flag_name(f: NFlag) -> &'static str {
    match f {
        NFlag::NPoint => "n-point",
        NFlag::Singular => "singular",
        NFlag::NotApplicable => "not-applicable",
        NFlag::Indeterminate => "indeterminate",
    }
}

fn err_json(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

/// Samples a two-dimensional region, checks the region conditions, and
/// classifies boundary points against {1} and {2}.
#[wasm_bindgen]
pub fn analyze_region(problem_text: &str) -> String {
    let pf = match parse_problem(problem_text) {
        Ok(pf) => pf,
        Err(e) => return err_json(e),
    };
    if pf.dim != 2 {
        return err_json("the region view draws 2-D problems only");
    }
    let spec = match pf.region_spec() {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let check = match check_definition1(&spec) {
        Ok(c) => c,
        Err(e) => return err_json(e),
    };
    let sets = [VarSet::singleton(1), VarSet::singleton(2)];
    let enumeration = match classify_boundary(&spec, &sets) {
        Ok(e) => e,
        Err(e) => return err_json(e),
    };

    let sampled = &enumeration.sampled;
    let mut members = Vec::new();
    if let Some(seed) = enumeration.seed_component {
        for flat in 0..sampled.grid.len() {
            if sampled.label[flat] == seed {
                let p = sampled.grid.node_point(flat);
                members.push([p[0], p[1]]);
            }
        }
    }
    let boundary: Vec<BoundaryView> = enumeration
        .records
        .iter()
        .map(|r| BoundaryView {
            point: [r.point[0], r.point[1]],
            active: r.active.iter().map(|&j| spec.surfaces[j].label.clone()).collect(),
            normal: r.is_normal,
            flags: r
                .flags
                .iter()
                .map(|(n, f)| (n.to_string(), flag_name(*f).to_string()))
                .collect(),
        })
        .collect();
    let mut critical = Vec::new();
    for n in &sets {
        for c in find_critical_pinned(&spec, &enumeration, n, &[]).points {
            critical.push(CriticalView {
                point: [c.point[0], c.point[1]],
                n_set: n.to_string(),
            });
        }
    }
    let view = RegionView {
        verdict: check
            .report
            .overall
            .map(|o| o.label().to_string())
            .unwrap_or_default(),
        conditions: check
            .report
            .conditions
            .iter()
            .map(|(n, v)| (n.clone(), v.label().to_string()))
            .collect(),
        caveats: check.report.caveats.clone(),
        members,
        boundary,
        critical,
    };
    serde_json::to_string(&view).unwrap_or_else(err_json)
}

/// Sweeps the Reeb digraph of the chosen coordinate projection.
#[wasm_bindgen]
pub fn reeb_json(problem_text: &str, coord: usize) -> String {
    let pf = match parse_problem(problem_text) {
        Ok(pf) => pf,
        Err(e) => return err_json(e),
    };
    let spec = match pf.region_spec() {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let graph = match reeb_digraph(&spec, coord) {
        Ok(g) => g,
        Err(e) => return err_json(e),
    };
    let view = GraphView {
        vertices: graph
            .vertices
            .iter()
            .map(|v| VertexView {
                value: v.value,
                kind: v.kind.label().to_string(),
            })
            .collect(),
        edges: graph.edges.iter().map(|e| [e.from, e.to]).collect(),
        warnings: graph.warnings.clone(),
        dot: export_dot(&graph),
    };
    serde_json::to_string(&view).unwrap_or_else(err_json)
}

/// Runs the decomposition hypothesis chain and the direct check, returning
/// the per-condition table.
#[wasm_bindgen]
pub fn decomposition_json(problem_text: &str) -> String {
    let pf = match parse_problem(problem_text) {
        Ok(pf) => pf,
        Err(e) => return err_json(e),
    };
    let input = match pf.decomposition_input() {
        Ok(i) => i,
        Err(e) => return err_json(e),
    };
    let mode = pf.mode.unwrap_or(TheoremMode::Thm1);
    let b = pf.b.unwrap_or(1);
    let report = match assemble(&input, mode, b) {
        Ok(r) => r,
        Err(e) => return err_json(e),
    };
    let witnesses: Vec<String> = report
        .witnesses
        .iter()
        .map(|w| format!("{}: {}", w.condition, w.diagnostic))
        .collect();
    serde_json::json!({
        "overall": report.overall.map(|o| o.label().to_string()),
        "conditions": report.conditions.iter()
            .map(|(n, v)| (n.clone(), v.label().to_string()))
            .collect::<Vec<_>>(),
        "witnesses": witnesses,
        "caveats": report.caveats,
    })
    .to_string()
}
