//! Sweep-line extraction of the Reeb digraph of a coordinate projection
//! restricted to the closure of a region.
//!
//! The sweep walks the grid layers of the chosen coordinate, labels the
//! connected components of each slice, and tracks components between
//! consecutive layers by shared grid cells. Component birth, death, merge
//! and split events become vertices; each event value is refined by
//! bisection on the event predicate and then snapped to a solver-found
//! critical value of the coordinate when exactly one lies nearby. Edges are
//! oriented by increasing sweep value, so the digraph is acyclic by
//! construction.

use crate::geometry::{flood_fill, CompiledPoly, Grid, SampledRegion};
use crate::poly::VarSet;
use crate::region::{enumerate_boundary, find_critical_pinned, RegionError, RegionSpec};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Birth,
    Death,
    Merge,
    Split,
    RegularEndpoint,
}

impl VertexKind {
    pub fn label(self) -> &'static str {
        match self {
            VertexKind::Birth => "birth",
            VertexKind::Death => "death",
            VertexKind::Merge => "merge",
            VertexKind::Split => "split",
            VertexKind::RegularEndpoint => "endpoint",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReebVertex {
    pub value: f64,
    /// Chain (edge-track) id the event belongs to; for merges the smallest
    /// incoming chain.
    pub component: u32,
    pub kind: VertexKind,
}

#[derive(Debug, Clone)]
pub struct ReebEdge {
    pub from: usize,
    pub to: usize,
    pub chain: u32,
}

#[derive(Debug, Clone, Default)]
pub struct ReebDigraph {
    pub coord: usize,
    pub vertices: Vec<ReebVertex>,
    pub edges: Vec<ReebEdge>,
    pub warnings: Vec<String>,
}

impl ReebDigraph {
    pub fn count_kind(&self, kind: VertexKind) -> usize {
        self.vertices.iter().filter(|v| v.kind == kind).count()
    }
}

/// Structural validation: edges oriented by strictly increasing value,
/// acyclicity, and the opening/closing balance of chains.
pub fn validate_digraph(g: &ReebDigraph) -> Result<(), String> {
    for e in &g.edges {
        let lo = g.vertices[e.from].value;
        let hi = g.vertices[e.to].value;
        if !(lo < hi) {
            return Err(format!(
                "edge {} -> {} is not oriented by increasing value ({} vs {})",
                e.from, e.to, lo, hi
            ));
        }
    }
    // Acyclic: Kahn peel.
    let mut indeg = vec![0usize; g.vertices.len()];
    for e in &g.edges {
        indeg[e.to] += 1;
    }
    let mut stack: Vec<usize> = (0..g.vertices.len()).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &g.edges {
        adj.entry(e.from).or_default().push(e.to);
    }
    while let Some(v) = stack.pop() {
        seen += 1;
        for &w in adj.get(&v).into_iter().flatten() {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                stack.push(w);
            }
        }
    }
    if seen != g.vertices.len() {
        return Err("digraph contains a cycle".into());
    }
    // Every chain opened by a vertex must be closed by one: openings equal
    // closings equal the edge count.
    let mut out = vec![0usize; g.vertices.len()];
    let mut inc = vec![0usize; g.vertices.len()];
    for e in &g.edges {
        out[e.from] += 1;
        inc[e.to] += 1;
    }
    let openings: usize = out.iter().sum();
    let closings: usize = inc.iter().sum();
    if openings != g.edges.len() || closings != g.edges.len() {
        return Err("edge bookkeeping is inconsistent".into());
    }
    for (v, vert) in g.vertices.iter().enumerate() {
        let ok = match vert.kind {
            VertexKind::Birth => inc[v] == 0 && out[v] >= 1,
            VertexKind::Death => out[v] == 0 && inc[v] >= 1,
            VertexKind::Split => inc[v] >= 1 && out[v] >= 2,
            VertexKind::Merge => inc[v] >= 2 && out[v] >= 1,
            VertexKind::RegularEndpoint => inc[v] + out[v] >= 1,
        };
        if !ok {
            return Err(format!(
                "vertex {} ({}) has in-degree {} and out-degree {}",
                v,
                vert.kind.label(),
                inc[v],
                out[v]
            ));
        }
    }
    Ok(())
}

struct SliceSampler<'a> {
    spec: &'a RegionSpec,
    ambient: &'a SampledRegion,
    seed_label: u32,
    axis: usize,
    sub_grid: Grid,
    compiled: Vec<CompiledPoly>,
}

impl<'a> SliceSampler<'a> {
    fn new(
        spec: &'a RegionSpec,
        ambient: &'a SampledRegion,
        seed_label: u32,
        axis: usize,
    ) -> Self {
        let other_axes: Vec<usize> = (1..=spec.nvars).filter(|&a| a != axis + 1).collect();
        let sub_grid = Grid::new(spec.bx.project(&other_axes), spec.tol.grid_res);
        let compiled = spec.surfaces.iter().map(|s| CompiledPoly::new(&s.f)).collect();
        SliceSampler {
            spec,
            ambient,
            seed_label,
            axis,
            sub_grid,
            compiled,
        }
    }

    fn full_point(&self, sub_multi: &[usize], v: f64) -> Vec<f64> {
        let n = self.spec.nvars;
        let mut p = vec![0.0; n];
        let mut si = 0;
        for a in 0..n {
            if a == self.axis {
                p[a] = v;
            } else {
                p[a] = self.sub_grid.coord(si, sub_multi[si]);
                si += 1;
            }
        }
        p
    }

    /// Layer mask straight from the ambient sampling (exact agreement with
    /// the region's own membership).
    fn layer_mask(&self, k: usize) -> Vec<bool> {
        let n = self.spec.nvars;
        let len = self.sub_grid.len();
        let mut mask = vec![false; len];
        let mut sub_multi = vec![0usize; n - 1];
        let mut full_multi = vec![0usize; n];
        for flat in 0..len {
            self.sub_grid.multi_from_flat(flat, &mut sub_multi);
            let mut si = 0;
            for a in 0..n {
                if a == self.axis {
                    full_multi[a] = k;
                } else {
                    full_multi[a] = sub_multi[si];
                    si += 1;
                }
            }
            let full_flat = self.ambient.grid.flat_from_multi(&full_multi);
            mask[flat] = self.ambient.label[full_flat] == self.seed_label;
        }
        mask
    }

    /// Mask of a slice at an arbitrary sweep value between layers k and
    /// k + 1: strict positivity of every surface, guarded by proximity to a
    /// sampled member of the seed component in one of the bracketing layers.
    fn between_mask(&self, v: f64, k: usize) -> Vec<bool> {
        let n = self.spec.nvars;
        let len = self.sub_grid.len();
        let mut mask = vec![false; len];
        let mut sub_multi = vec![0usize; n - 1];
        for flat in 0..len {
            self.sub_grid.multi_from_flat(flat, &mut sub_multi);
            let p = self.full_point(&sub_multi, v);
            if !self.compiled.iter().all(|c| c.eval(&p) > 0.0) {
                continue;
            }
            mask[flat] = self.near_seed_member(&sub_multi, k);
        }
        mask
    }

    fn near_seed_member(&self, sub_multi: &[usize], k: usize) -> bool {
        let n = self.spec.nvars;
        let res = self.ambient.grid.res;
        // Chebyshev-1 scan in the slice dimensions, over both bracketing
        // layers.
        let dims = n - 1;
        let mut offsets = vec![0isize; dims];
        loop {
            let mut candidate = vec![0usize; n];
            let mut ok = true;
            let mut si = 0;
            for a in 0..n {
                if a == self.axis {
                    continue;
                }
                let idx = sub_multi[si] as isize + offsets[si];
                if idx < 0 || idx >= res as isize {
                    ok = false;
                    break;
                }
                candidate[a] = idx as usize;
                si += 1;
            }
            if ok {
                for layer in [k, (k + 1).min(res - 1)] {
                    candidate[self.axis] = layer;
                    let flat = self.ambient.grid.flat_from_multi(&candidate);
                    if self.ambient.label[flat] == self.seed_label {
                        return true;
                    }
                }
            }
            // Advance the offset counter over {-1, 0, 1}^dims.
            let mut i = 0;
            loop {
                if i == dims {
                    return false;
                }
                offsets[i] += 1;
                if offsets[i] <= 1 {
                    break;
                }
                offsets[i] = -1;
                i += 1;
            }
        }
    }

    /// Number of slice components at sweep value `v` touching the footprint.
    fn components_touching(&self, v: f64, k: usize, footprint: &[bool]) -> usize {
        let mask = self.between_mask(v, k);
        let (labels, count) = flood_fill(&self.sub_grid, &mask);
        let mut touched = vec![false; count as usize + 1];
        for (flat, &m) in mask.iter().enumerate() {
            if m && footprint[flat] {
                touched[labels[flat] as usize] = true;
            }
        }
        touched.iter().skip(1).filter(|&&t| t).count()
    }
}

struct EventRefiner<'a> {
    sampler: &'a SliceSampler<'a>,
    /// Solver-found critical values of the sweep coordinate.
    candidates: Vec<f64>,
    warnings: Vec<String>,
}

impl<'a> EventRefiner<'a> {
    /// Bisects the predicate "at least `threshold` components touch the
    /// footprint" inside (v_lo, v_hi), then snaps to the unique nearby
    /// critical value when there is one.
    fn refine(
        &mut self,
        k: usize,
        v_lo: f64,
        v_hi: f64,
        footprint: &[bool],
        threshold: usize,
        rises: bool,
    ) -> f64 {
        let mut lo = v_lo;
        let mut hi = v_hi;
        let mut steps = 0;
        while hi - lo > 1e-6 && steps < 60 {
            let mid = 0.5 * (lo + hi);
            let holds = self.sampler.components_touching(mid, k, footprint) >= threshold;
            if holds == rises {
                hi = mid;
            } else {
                lo = mid;
            }
            steps += 1;
        }
        let bisected = 0.5 * (lo + hi);
        let spacing = self.sampler.ambient.grid.spacing(self.sampler.axis);
        let near: Vec<f64> = self
            .candidates
            .iter()
            .cloned()
            .filter(|c| *c >= v_lo - spacing && *c <= v_hi + spacing)
            .collect();
        match near.len() {
            1 => near[0],
            0 => bisected,
            _ => {
                self.warnings.push(format!(
                    "{} critical values within one grid cell of the event near {:.6}: ordering indeterminate",
                    near.len(),
                    bisected
                ));
                *near
                    .iter()
                    .min_by(|a, b| {
                        (*a - bisected).abs().total_cmp(&(*b - bisected).abs())
                    })
                    .unwrap()
            }
        }
    }
}

/// Computes the Reeb digraph of the projection onto coordinate `coord`
/// (1-based) restricted to the sampled closure of the region.
pub fn reeb_digraph(spec: &RegionSpec, coord: usize) -> Result<ReebDigraph, RegionError> {
    if coord == 0 || coord > spec.nvars {
        return Err(RegionError::Input(format!(
            "sweep coordinate {} out of range 1..={}",
            coord, spec.nvars
        )));
    }
    if spec.nvars < 2 {
        return Err(RegionError::Input(
            "the sweep needs at least two coordinates".into(),
        ));
    }
    let axis = coord - 1;
    let enumeration = enumerate_boundary(spec)?;
    let mut g = ReebDigraph {
        coord,
        ..Default::default()
    };
    let seed_label = match enumeration.seed_component {
        Some(l) => l,
        None => {
            g.warnings
                .push("region not sampled at this resolution: empty digraph".into());
            return Ok(g);
        }
    };
    let ambient = &enumeration.sampled;
    let sampler = SliceSampler::new(spec, ambient, seed_label, axis);

    // Critical values of the sweep coordinate, for snapping event values.
    let candidates: Vec<f64> = {
        let crits = find_critical_pinned(spec, &enumeration, &VarSet::singleton(coord), &[]);
        let mut vals: Vec<f64> = crits.points.iter().map(|c| c.point[axis]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup_by(|a, b| (*a - *b).abs() <= 1e-7);
        vals
    };
    let mut refiner = EventRefiner {
        sampler: &sampler,
        candidates,
        warnings: Vec::new(),
    };

    let res = ambient.grid.res;
    let sub_len = sampler.sub_grid.len();
    let mut prev_mask = sampler.layer_mask(0);
    let (mut prev_labels, mut prev_count) = flood_fill(&sampler.sub_grid, &prev_mask);

    // chain id -> open vertex index
    let mut chains: Vec<usize> = Vec::new();
    // component label in the previous layer -> chain id
    let mut active: BTreeMap<u32, u32> = BTreeMap::new();

    let v0 = ambient.grid.coord(axis, 0);
    for c in 1..=prev_count {
        let vid = g.vertices.len();
        g.vertices.push(ReebVertex {
            value: v0,
            component: chains.len() as u32,
            kind: VertexKind::RegularEndpoint,
        });
        chains.push(vid);
        active.insert(c, (chains.len() - 1) as u32);
        g.warnings
            .push("region touches the sweep-start box face".into());
    }

    for k in 0..res - 1 {
        let next_mask = sampler.layer_mask(k + 1);
        let (next_labels, next_count) = flood_fill(&sampler.sub_grid, &next_mask);
        let v_lo = ambient.grid.coord(axis, k);
        let v_hi = ambient.grid.coord(axis, k + 1);

        // Overlap links between the two layers.
        let mut links: Vec<(u32, u32)> = Vec::new();
        for flat in 0..sub_len {
            if prev_mask[flat] && next_mask[flat] {
                links.push((prev_labels[flat], next_labels[flat]));
            }
        }
        links.sort();
        links.dedup();

        // Union-find over prev comps (1..=prev_count) and next comps
        // (offset by prev_count).
        let total = (prev_count + next_count) as usize + 1;
        let mut parent: Vec<usize> = (0..total + next_count as usize + 1).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != c {
                let nxt = parent[c];
                parent[c] = r;
                c = nxt;
            }
            r
        }
        for &(a, b) in &links {
            let ra = find(&mut parent, a as usize);
            let rb = find(&mut parent, (prev_count + b) as usize);
            parent[ra.max(rb)] = ra.min(rb);
        }
        let mut groups: BTreeMap<usize, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
        for a in 1..=prev_count {
            let r = find(&mut parent, a as usize);
            groups.entry(r).or_default().0.push(a);
        }
        for b in 1..=next_count {
            let r = find(&mut parent, (prev_count + b) as usize);
            groups.entry(r).or_default().1.push(b);
        }

        let mut next_active: BTreeMap<u32, u32> = BTreeMap::new();
        for (_, (preds, succs)) in groups {
            let footprint = {
                let mut fp = vec![false; sub_len];
                for flat in 0..sub_len {
                    if preds.iter().any(|&a| prev_mask[flat] && prev_labels[flat] == a)
                        || succs.iter().any(|&b| next_mask[flat] && next_labels[flat] == b)
                    {
                        fp[flat] = true;
                    }
                }
                inflate(&sampler.sub_grid, &fp)
            };
            match (preds.len(), succs.len()) {
                (1, 1) => {
                    let chain = active[&preds[0]];
                    next_active.insert(succs[0], chain);
                }
                (0, _) => {
                    // One birth vertex per newborn component.
                    for &b in &succs {
                        let value = refiner.refine(k, v_lo, v_hi, &footprint, 1, true);
                        let vid = g.vertices.len();
                        g.vertices.push(ReebVertex {
                            value,
                            component: chains.len() as u32,
                            kind: VertexKind::Birth,
                        });
                        chains.push(vid);
                        next_active.insert(b, (chains.len() - 1) as u32);
                    }
                }
                (_, 0) => {
                    for &a in &preds {
                        let value = refiner.refine(k, v_lo, v_hi, &footprint, 1, false);
                        let chain = active[&a];
                        let vid = g.vertices.len();
                        g.vertices.push(ReebVertex {
                            value,
                            component: chain,
                            kind: VertexKind::Death,
                        });
                        g.edges.push(ReebEdge {
                            from: chains[chain as usize],
                            to: vid,
                            chain,
                        });
                    }
                }
                (1, m) if m >= 2 => {
                    let value = refiner.refine(k, v_lo, v_hi, &footprint, m, true);
                    let chain = active[&preds[0]];
                    let vid = g.vertices.len();
                    g.vertices.push(ReebVertex {
                        value,
                        component: chain,
                        kind: VertexKind::Split,
                    });
                    g.edges.push(ReebEdge {
                        from: chains[chain as usize],
                        to: vid,
                        chain,
                    });
                    for &b in &succs {
                        chains.push(vid);
                        next_active.insert(b, (chains.len() - 1) as u32);
                    }
                }
                (m, 1) if m >= 2 => {
                    let value = refiner.refine(k, v_lo, v_hi, &footprint, m, false);
                    let first_chain = active[&preds[0]];
                    let vid = g.vertices.len();
                    g.vertices.push(ReebVertex {
                        value,
                        component: first_chain,
                        kind: VertexKind::Merge,
                    });
                    for &a in &preds {
                        let chain = active[&a];
                        g.edges.push(ReebEdge {
                            from: chains[chain as usize],
                            to: vid,
                            chain,
                        });
                    }
                    chains.push(vid);
                    next_active.insert(succs[0], (chains.len() - 1) as u32);
                }
                (m1, m2) => {
                    // Simultaneous merge and split inside one grid cell.
                    refiner.warnings.push(format!(
                        "complex event between {:.6} and {:.6} ({} -> {} components): ordering indeterminate",
                        v_lo, v_hi, m1, m2
                    ));
                    let value = 0.5 * (v_lo + v_hi);
                    let first_chain = active[&preds[0]];
                    let vid = g.vertices.len();
                    g.vertices.push(ReebVertex {
                        value,
                        component: first_chain,
                        kind: VertexKind::Merge,
                    });
                    for &a in &preds {
                        let chain = active[&a];
                        g.edges.push(ReebEdge {
                            from: chains[chain as usize],
                            to: vid,
                            chain,
                        });
                    }
                    for &b in &succs {
                        chains.push(vid);
                        next_active.insert(b, (chains.len() - 1) as u32);
                    }
                }
            }
        }

        prev_mask = next_mask;
        prev_labels = next_labels;
        prev_count = next_count;
        active = next_active;
    }

    // Close chains still alive at the last layer.
    let v_end = ambient.grid.coord(axis, res - 1);
    for (_, chain) in active {
        let vid = g.vertices.len();
        g.vertices.push(ReebVertex {
            value: v_end,
            component: chain,
            kind: VertexKind::RegularEndpoint,
        });
        g.edges.push(ReebEdge {
            from: chains[chain as usize],
            to: vid,
            chain,
        });
        g.warnings
            .push("region touches the sweep-end box face".into());
    }

    // Distinct events squeezed into one grid cell cannot be ordered
    // reliably; flag them instead of merging.
    let spacing = ambient.grid.spacing(axis);
    let mut event_values: Vec<f64> = g
        .vertices
        .iter()
        .filter(|v| v.kind != VertexKind::RegularEndpoint)
        .map(|v| v.value)
        .collect();
    event_values.sort_by(f64::total_cmp);
    for pair in event_values.windows(2) {
        if pair[1] - pair[0] < spacing && pair[1] - pair[0] > 1e-12 {
            refiner.warnings.push(format!(
                "events at {:.6} and {:.6} within one grid cell: ordering indeterminate",
                pair[0], pair[1]
            ));
        }
    }

    g.warnings.extend(refiner.warnings);
    g.warnings.sort();
    g.warnings.dedup();
    Ok(g)
}

/// Chebyshev-1 inflation of a cell mask.
fn inflate(grid: &Grid, mask: &[bool]) -> Vec<bool> {
    let n = grid.dim();
    let mut out = mask.to_vec();
    let mut multi = vec![0usize; n];
    for flat in 0..mask.len() {
        if !mask[flat] {
            continue;
        }
        grid.multi_from_flat(flat, &mut multi);
        for axis in 0..n {
            let stride = grid.res.pow((n - 1 - axis) as u32);
            if multi[axis] > 0 {
                out[flat - stride] = true;
            }
            if multi[axis] + 1 < grid.res {
                out[flat + stride] = true;
            }
        }
    }
    out
}

/// Standard directed-graph text export: vertices labeled with the sweep
/// value at six decimals and the event kind, deterministic ordering.
pub fn export_dot(g: &ReebDigraph) -> String {
    let mut out = String::from("digraph reeb {\n");
    for (i, v) in g.vertices.iter().enumerate() {
        let _ = writeln!(out, "  v{} [label=\"{} @ {:.6}\"];", i, v.kind.label(), v.value);
    }
    let mut edges: Vec<&ReebEdge> = g.edges.iter().collect();
    edges.sort_by_key(|e| (e.from, e.to, e.chain));
    for e in edges {
        let _ = writeln!(out, "  v{} -> v{};", e.from, e.to);
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, Tolerances};
    use crate::poly::Polynomial;
    use crate::region::CylinderSurface;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn disk() -> RegionSpec {
        RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("S1", Polynomial::parse("1-x1^2-x2^2", 2).unwrap()).unwrap(),
            ],
            vec![0.0, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap()
    }

    fn annulus() -> RegionSpec {
        RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("OUT", Polynomial::parse("1-x1^2-x2^2", 2).unwrap()).unwrap(),
                CylinderSurface::new("IN", Polynomial::parse("x1^2+x2^2-1/4", 2).unwrap()).unwrap(),
            ],
            vec![0.7, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap()
    }

    fn two_cylinders() -> RegionSpec {
        RegionSpec::new(
            3,
            vec![
                CylinderSurface::new("S1", Polynomial::parse("1-(x1-1/2)^2-x2^2", 3).unwrap())
                    .unwrap(),
                CylinderSurface::new("S2", Polynomial::parse("1-(x1+1/2)^2-x3^2", 3).unwrap())
                    .unwrap(),
            ],
            vec![0.0, 0.0, 0.0],
            BoundingBox::centered(3, 2.0),
            tols(),
        )
        .unwrap()
    }

    #[test]
    fn disk_is_a_single_edge_path() {
        let g = reeb_digraph(&disk(), 1).unwrap();
        validate_digraph(&g).unwrap();
        assert_eq!(g.vertices.len(), 2, "{:?}", g.vertices);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.count_kind(VertexKind::Birth), 1);
        assert_eq!(g.count_kind(VertexKind::Death), 1);
        let mut vals: Vec<f64> = g.vertices.iter().map(|v| v.value).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + 1.0).abs() <= 1e-4, "birth at {}", vals[0]);
        assert!((vals[1] - 1.0).abs() <= 1e-4, "death at {}", vals[1]);
    }

    #[test]
    fn cylinder_pair_sweep_is_a_single_edge_with_half_endpoints() {
        let g = reeb_digraph(&two_cylinders(), 1).unwrap();
        validate_digraph(&g).unwrap();
        assert_eq!(g.vertices.len(), 2, "{:?}", g.vertices);
        assert_eq!(g.edges.len(), 1);
        let mut vals: Vec<f64> = g.vertices.iter().map(|v| v.value).collect();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + 0.5).abs() <= 1e-4, "birth at {}", vals[0]);
        assert!((vals[1] - 0.5).abs() <= 1e-4, "death at {}", vals[1]);
    }

    #[test]
    fn annulus_sweep_has_split_and_merge() {
        let g = reeb_digraph(&annulus(), 1).unwrap();
        validate_digraph(&g).unwrap();
        assert_eq!(g.vertices.len(), 4, "{:?}", g.vertices);
        assert_eq!(g.edges.len(), 4);
        assert_eq!(g.count_kind(VertexKind::Birth), 1);
        assert_eq!(g.count_kind(VertexKind::Split), 1);
        assert_eq!(g.count_kind(VertexKind::Merge), 1);
        assert_eq!(g.count_kind(VertexKind::Death), 1);
        let split = g
            .vertices
            .iter()
            .find(|v| v.kind == VertexKind::Split)
            .unwrap();
        let merge = g
            .vertices
            .iter()
            .find(|v| v.kind == VertexKind::Merge)
            .unwrap();
        assert!((split.value + 0.5).abs() <= 1e-4, "split at {}", split.value);
        assert!((merge.value - 0.5).abs() <= 1e-4, "merge at {}", merge.value);
    }

    #[test]
    fn dot_export_is_deterministic_and_complete() {
        let g = reeb_digraph(&disk(), 1).unwrap();
        let a = export_dot(&g);
        let b = export_dot(&reeb_digraph(&disk(), 1).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.matches("->").count(), 1);
        assert!(a.starts_with("digraph reeb {\n"));
        let annulus_dot = export_dot(&reeb_digraph(&annulus(), 1).unwrap());
        assert_eq!(annulus_dot.matches("->").count(), 4);
        assert_eq!(annulus_dot.matches("label=").count(), 4);
    }

    #[test]
    fn nearby_events_are_flagged_as_indeterminate_ordering() {
        // Two tiny side lobes attached to a bar: the two split values差
        // land inside one grid cell of each other.
        let spec = RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("A", Polynomial::parse("1-x1^2-x2^2", 2).unwrap()).unwrap(),
                CylinderSurface::new(
                    "B",
                    Polynomial::parse("(x1-1/100)^2+x2^2-1/4", 2).unwrap(),
                )
                .unwrap(),
            ],
            vec![0.7, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap();
        // An off-center annulus: split at x1 = 0.01 - 0.5 = -0.49 and the
        // outer birth at -1; merge at 0.51, death at 1. No near events yet.
        let g = reeb_digraph(&spec, 1).unwrap();
        assert!(g.warnings.iter().all(|w| !w.contains("within one grid cell")));

        // Shrink the annulus gap so split and merge collapse into one cell
        // along the sweep: an inner hole of radius 1/32 around x1 = 0.
        let spec = RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("A", Polynomial::parse("1-x1^2-x2^2", 2).unwrap()).unwrap(),
                CylinderSurface::new(
                    "B",
                    Polynomial::parse("x1^2+x2^2-1/1024", 2).unwrap(),
                )
                .unwrap(),
            ],
            vec![0.7, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap();
        let g = reeb_digraph(&spec, 1).unwrap();
        // The hole spans half a grid cell: whatever events are detected
        // must carry the ordering warning (or collapse to a flagged
        // complex event).
        assert!(
            g.warnings
                .iter()
                .any(|w| w.contains("indeterminate")),
            "{:?}",
            g.warnings
        );
    }

    #[test]
    fn unsampled_region_yields_empty_graph_with_header() {
        // A disk far below grid resolution: the seed is strictly inside the
        // region, but no lattice node is.
        let spec = RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("S1", Polynomial::parse("1/1000000-x1^2-x2^2", 2).unwrap())
                    .unwrap(),
            ],
            vec![0.0, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap();
        let g = reeb_digraph(&spec, 1).unwrap();
        assert!(g.vertices.is_empty() && g.edges.is_empty());
        assert_eq!(export_dot(&g), "digraph reeb {\n}\n");
        assert!(!g.warnings.is_empty());
        // The region checker reports the same situation as a condition-1
        // failure rather than a crash.
        let out = crate::region::check_definition1(&spec).unwrap();
        assert_eq!(
            out.report.verdict_of("def1-cond1"),
            Some(crate::report::Verdict::Fail)
        );
    }

    #[test]
    fn event_values_match_critical_values() {
        let spec = annulus();
        let g = reeb_digraph(&spec, 1).unwrap();
        let crits = crate::region::find_critical(&spec, &VarSet::singleton(1)).unwrap();
        for v in &g.vertices {
            let nearest = crits
                .points
                .iter()
                .map(|c| (c.point[0] - v.value).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= 1e-4, "event at {} has no critical value nearby", v.value);
        }
    }
}
