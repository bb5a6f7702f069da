//! Region data model, verification of the defining conditions of a real
//! algebraic region within a box, and boundary-point classification.
//!
//! A region is the connected component of a seed inside the set where all
//! surface polynomials are strictly positive. Its boundary is sampled on a
//! grid, refined by Newton iteration onto the active zero sets, and each
//! refined point carries a normal frame. Two solver sweeps complement the
//! samples: a singular/critical point solver (zero set plus vanishing
//! minors of the projected gradient matrix) and a tangency sweep that hunts
//! for rank-deficient normal frames that sampling alone would miss.

use crate::geometry::{
    build_frame, dedup_points, gauss_newton_ls, newton_refine, sample_grid, BoundingBox,
    GeomError, NormalFrame, PolySystem, RefineError, SampledRegion, Sign, Tolerances, Tri,
};
use crate::poly::{determinant, PolyError, Polynomial, VarSet};
use crate::report::{ConditionReport, Verdict, Witness};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum RegionError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("seed is outside the bounding box")]
    SeedOutsideBox,
    #[error("surface {surface}: seed does not satisfy f > 0")]
    SeedNotPositive { surface: String },
    #[error("surface {surface}: polynomial is constant")]
    ConstantSurface { surface: String },
    #[error("surface {surface}: support {support} not contained in declared support {declared}")]
    SupportOverrideTooSmall {
        surface: String,
        support: String,
        declared: String,
    },
    #[error("surface {surface}: expected {expected} variables, got {got}")]
    SurfaceArity {
        surface: String,
        expected: usize,
        got: usize,
    },
    #[error("{0}")]
    Input(String),
}

/// A bounding hypersurface: a polynomial together with its variable-support
/// set. The support is the syntactic support of the polynomial unless the
/// problem file overrides it (the override is recorded and reported).
#[derive(Debug, Clone)]
pub struct CylinderSurface {
    pub label: String,
    pub f: Polynomial,
    pub support: VarSet,
    pub support_overridden: bool,
}

impl CylinderSurface {
    pub fn new(label: &str, f: Polynomial) -> Result<Self, RegionError> {
        if f.support().is_empty() {
            return Err(RegionError::ConstantSurface {
                surface: label.to_string(),
            });
        }
        let support = f.support();
        Ok(CylinderSurface {
            label: label.to_string(),
            f,
            support,
            support_overridden: false,
        })
    }

    pub fn with_support_override(
        label: &str,
        f: Polynomial,
        support: VarSet,
    ) -> Result<Self, RegionError> {
        let syntactic = f.support();
        if syntactic.is_empty() {
            return Err(RegionError::ConstantSurface {
                surface: label.to_string(),
            });
        }
        if !syntactic.is_subset(&support) {
            return Err(RegionError::SupportOverrideTooSmall {
                surface: label.to_string(),
                support: syntactic.to_string(),
                declared: support.to_string(),
            });
        }
        Ok(CylinderSurface {
            label: label.to_string(),
            f,
            support,
            support_overridden: true,
        })
    }
}

/// A region specification: ambient dimension, bounding surfaces, a seed
/// picking the connected component, the verification box, and tolerances.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub nvars: usize,
    pub surfaces: Vec<CylinderSurface>,
    pub seed: Vec<f64>,
    pub bx: BoundingBox,
    pub tol: Tolerances,
}

impl RegionSpec {
    pub fn new(
        nvars: usize,
        surfaces: Vec<CylinderSurface>,
        seed: Vec<f64>,
        bx: BoundingBox,
        tol: Tolerances,
    ) -> Result<Self, RegionError> {
        tol.validate()?;
        if bx.dim() != nvars {
            return Err(GeomError::Dimension {
                expected: nvars,
                got: bx.dim(),
            }
            .into());
        }
        if seed.len() != nvars {
            return Err(GeomError::Dimension {
                expected: nvars,
                got: seed.len(),
            }
            .into());
        }
        if !bx.contains(&seed) {
            return Err(RegionError::SeedOutsideBox);
        }
        for s in &surfaces {
            if s.f.nvars() != nvars {
                return Err(RegionError::SurfaceArity {
                    surface: s.label.clone(),
                    expected: nvars,
                    got: s.f.nvars(),
                });
            }
            let v = s.f.evaluate(&seed)?;
            if !(v > 0.0) {
                return Err(RegionError::SeedNotPositive {
                    surface: s.label.clone(),
                });
            }
        }
        Ok(RegionSpec {
            nvars,
            surfaces,
            seed,
            bx,
            tol,
        })
    }

    pub fn surface_polys(&self) -> Vec<&Polynomial> {
        self.surfaces.iter().map(|s| &s.f).collect()
    }
}

/// Classification of a boundary point against one coordinate set N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NFlag {
    /// Normal point that is not N-singular.
    NPoint,
    /// Some nonzero normal vector lies in span{e_j : j in N}; for normal
    /// points and one-element N this coincides with being a critical point
    /// of the coordinate projection.
    Singular,
    /// Not a normal point and not N-singular.
    NotApplicable,
    /// The deciding singular-value ratio fell inside the threshold band.
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct BoundaryPointRecord {
    pub point: Vec<f64>,
    /// Ascending indices into `spec.surfaces`.
    pub active: Vec<usize>,
    pub frame: NormalFrame,
    pub flags: BTreeMap<VarSet, NFlag>,
    pub is_normal: bool,
}

#[derive(Debug)]
pub struct BoundaryEnumeration {
    pub records: Vec<BoundaryPointRecord>,
    pub sampled: SampledRegion,
    pub seed_component: Option<u32>,
    /// The sampled component or a refined boundary point touches a box face.
    pub touches_box: bool,
    pub refinement_failures: Vec<(Vec<f64>, String)>,
    /// Shell nodes where several surfaces are simultaneously within a
    /// grid-scale band of zero, keyed by the candidate active set. These
    /// seed the multi-surface solvers.
    pub multi_seeds: BTreeMap<Vec<usize>, Vec<Vec<f64>>>,
}

impl BoundaryEnumeration {
    pub fn records_with_active(&self, active: &[usize]) -> impl Iterator<Item = &BoundaryPointRecord> {
        let key = active.to_vec();
        self.records.iter().filter(move |r| r.active == key)
    }

    /// Distinct active sets observed among the refined records.
    pub fn observed_active_sets(&self) -> Vec<Vec<usize>> {
        let mut sets: Vec<Vec<usize>> = self.records.iter().map(|r| r.active.clone()).collect();
        sets.sort();
        sets.dedup();
        sets
    }
}

const MAX_SINGLE_SEEDS_PER_SURFACE: usize = 40_000;
const MAX_MULTI_SEEDS_PER_SET: usize = 8_000;
const MAX_SOLVER_SEEDS: usize = 600;

fn stride_cap<T: Clone>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    let stride = items.len().div_ceil(cap);
    items.iter().step_by(stride).cloned().collect()
}

/// Samples the region, finds the shell of grid nodes where membership flips,
/// and Newton-refines shell crossings onto every candidate active set.
pub fn enumerate_boundary(spec: &RegionSpec) -> Result<BoundaryEnumeration, RegionError> {
    let tol = &spec.tol;
    let constraints: Vec<(&Polynomial, Sign)> = spec
        .surfaces
        .iter()
        .map(|s| (&s.f, Sign::Positive))
        .collect();
    let sampled = sample_grid(&constraints, &spec.bx, tol);
    let grid = &sampled.grid;
    let n = spec.nvars;
    let seed_component = sampled.component_near(&spec.seed);

    let singles: Vec<PolySystem> = spec
        .surfaces
        .iter()
        .map(|s| PolySystem::new(vec![s.f.clone()]))
        .collect();

    let mut enumeration = BoundaryEnumeration {
        records: Vec::new(),
        sampled: SampledRegion {
            grid: grid.clone(),
            member: Vec::new(),
            label: Vec::new(),
            n_components: 0,
        },
        seed_component,
        touches_box: false,
        refinement_failures: Vec::new(),
        multi_seeds: BTreeMap::new(),
    };

    let seed_label = match seed_component {
        Some(l) => l,
        None => {
            enumeration.sampled = sampled;
            return Ok(enumeration);
        }
    };

    // Shell scan: member nodes of the seed component with a non-member
    // face neighbor.
    let mut single_seeds: Vec<Vec<Vec<f64>>> = vec![Vec::new(); spec.surfaces.len()];
    let mut multi_seeds: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    let mut touches_box = false;
    let band_scale = 2.0 * grid.max_spacing();

    let mut multi = vec![0usize; n];
    let mut npoint = vec![0.0f64; n];
    for flat in 0..grid.len() {
        if sampled.label[flat] != seed_label {
            continue;
        }
        grid.multi_from_flat(flat, &mut multi);
        if multi.iter().any(|&k| k == 0 || k == grid.res - 1) {
            touches_box = true;
        }
        grid.point_from_multi(&multi, &mut npoint);
        let mut is_shell = false;
        for axis in 0..n {
            let stride = grid.res.pow((n - 1 - axis) as u32);
            for dir in [-1isize, 1] {
                let k = multi[axis] as isize + dir;
                if k < 0 || k >= grid.res as isize {
                    continue;
                }
                let nb = (flat as isize + dir * stride as isize) as usize;
                if sampled.member[nb] {
                    continue;
                }
                is_shell = true;
                // Midpoint of the crossing edge seeds a singleton
                // refinement for each surface that changes sign on it.
                let mut mid = npoint.clone();
                mid[axis] += 0.5 * (dir as f64) * grid.spacing(axis);
                for (j, sys) in singles.iter().enumerate() {
                    let vp = sys.eval_f64(0, &npoint);
                    let mut q = npoint.clone();
                    q[axis] += (dir as f64) * grid.spacing(axis);
                    let vq = sys.eval_f64(0, &q);
                    if vp > 0.0 && vq <= 0.0 {
                        single_seeds[j].push(mid.clone());
                    }
                }
            }
        }
        if !is_shell {
            continue;
        }
        // Candidate simultaneous activations at this shell node: surfaces
        // within a grid-scale band of zero (the band is local, scaled by the
        // gradient magnitude, because grid spacing limits pre-refinement
        // precision).
        let mut near: Vec<usize> = Vec::new();
        for (j, sys) in singles.iter().enumerate() {
            let v = sys.eval_f64(0, &npoint).abs();
            let g = sys.eval_gradient_f64(0, &npoint);
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if v <= band_scale * (gn + 1e-9) {
                near.push(j);
            }
        }
        if near.len() >= 2 && near.len() <= 5 {
            for size in 2..=near.len().min(n) {
                for combo in combinations(&near, size) {
                    multi_seeds.entry(combo).or_default().push(npoint.clone());
                }
            }
        }
    }

    // Refine singleton crossings. The per-seed work is independent; results
    // are collected in seed order, so the outcome is deterministic.
    enum Refinement {
        Accepted(Vec<usize>, Vec<f64>),
        OnFace,
        Failed(Vec<f64>, String),
        Dropped,
    }
    let mut raw: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    let mut failures: Vec<(Vec<f64>, String)> = Vec::new();
    for (j, seeds) in single_seeds.iter().enumerate() {
        let capped = stride_cap(seeds, MAX_SINGLE_SEEDS_PER_SURFACE);
        let outcomes: Vec<Refinement> = capped
            .par_iter()
            .map(|seed| match newton_refine(&singles[j], seed, tol) {
                Ok(refined) => {
                    if let Some(active) =
                        validate_boundary_point(spec, &sampled, seed_label, &refined.point, 1)
                    {
                        Refinement::Accepted(active, refined.point)
                    } else if spec.bx.on_face(&refined.point, 10.0 * tol.zero_tol)
                        && spec.bx.contains(&refined.point)
                    {
                        Refinement::OnFace
                    } else {
                        Refinement::Dropped
                    }
                }
                Err(e) => Refinement::Failed(
                    seed.clone(),
                    format!("surface {}: {}", spec.surfaces[j].label, e),
                ),
            })
            .collect();
        for outcome in outcomes {
            match outcome {
                Refinement::Accepted(active, point) => raw.entry(active).or_default().push(point),
                Refinement::OnFace => touches_box = true,
                Refinement::Failed(seed, msg) => failures.push((seed, msg)),
                Refinement::Dropped => {}
            }
        }
    }

    // Refine candidate multi-active sets.
    for (set, seeds) in &multi_seeds {
        let sys = PolySystem::new(set.iter().map(|&j| spec.surfaces[j].f.clone()).collect());
        let capped = stride_cap(seeds, MAX_MULTI_SEEDS_PER_SET);
        let outcomes: Vec<Refinement> = capped
            .par_iter()
            .map(|seed| match newton_refine(&sys, seed, tol) {
                Ok(refined) => {
                    match validate_boundary_point(spec, &sampled, seed_label, &refined.point, 1) {
                        Some(active) => Refinement::Accepted(active, refined.point),
                        None => Refinement::Dropped,
                    }
                }
                Err(RefineError::RankDeficient { ratio }) => Refinement::Failed(
                    seed.clone(),
                    format!(
                        "surfaces {:?}: rank-deficient Jacobian (ratio {:.3e})",
                        set.iter()
                            .map(|&j| spec.surfaces[j].label.clone())
                            .collect::<Vec<_>>(),
                        ratio
                    ),
                ),
                Err(_) => Refinement::Dropped,
            })
            .collect();
        for outcome in outcomes {
            match outcome {
                Refinement::Accepted(active, point) => raw.entry(active).or_default().push(point),
                Refinement::Failed(seed, msg) => failures.push((seed, msg)),
                _ => {}
            }
        }
    }

    // Augment: a refined point with another surface inside the activation
    // band may actually lie on the bigger stratum; retry with it included.
    let mut augmented: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    for (active, points) in raw {
        for p in points {
            let extras: Vec<usize> = (0..spec.surfaces.len())
                .filter(|j| !active.contains(j))
                .filter(|&j| {
                    let v = spec.surfaces[j].f.evaluate(&p).unwrap_or(f64::INFINITY).abs();
                    v > tol.zero_tol && v <= tol.activation_band()
                })
                .collect();
            if !extras.is_empty() && active.len() + extras.len() <= n {
                let mut target: Vec<usize> = active.iter().cloned().chain(extras).collect();
                target.sort();
                let sys =
                    PolySystem::new(target.iter().map(|&j| spec.surfaces[j].f.clone()).collect());
                if let Ok(refined) = newton_refine(&sys, &p, tol) {
                    if let Some(measured) =
                        validate_boundary_point(spec, &sampled, seed_label, &refined.point, 1)
                    {
                        augmented.entry(measured).or_default().push(refined.point);
                        continue;
                    }
                }
            }
            augmented.entry(active.clone()).or_default().push(p);
        }
    }

    // Dedup per active set, build frames, sort.
    let mut records = Vec::new();
    for (active, points) in augmented {
        let kept = dedup_points(points, tol.dedup_radius());
        let mut batch: Vec<BoundaryPointRecord> = kept
            .into_par_iter()
            .map(|point| {
                let frame = frame_at(spec, &active, &point);
                BoundaryPointRecord {
                    point,
                    is_normal: active.len() == 1,
                    active: active.clone(),
                    frame,
                    flags: BTreeMap::new(),
                }
            })
            .collect();
        records.append(&mut batch);
    }
    records.sort_by(|a, b| {
        lex_cmp(&a.point, &b.point).then_with(|| a.active.cmp(&b.active))
    });

    enumeration.records = records;
    enumeration.sampled = sampled;
    enumeration.touches_box = touches_box;
    enumeration.refinement_failures = failures;
    enumeration.multi_seeds = multi_seeds;
    Ok(enumeration)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Builds the normal frame at a refined point: gradients of the active
/// surfaces through the exact evaluation path, rank from row-normalized
/// singular values.
pub fn frame_at(spec: &RegionSpec, active: &[usize], point: &[f64]) -> NormalFrame {
    let gradients: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| {
            spec.surfaces[j]
                .f
                .gradient()
                .iter()
                .map(|p| p.evaluate(point).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    build_frame(point.to_vec(), active.to_vec(), gradients, &spec.tol)
}

/// Membership in the sampled closure of the region: inside the box and not
/// on a face, every surface nonnegative (within `zero_tol`), and within a
/// small Chebyshev neighborhood of a sampled member of the seed component.
/// Returns the measured active set (surfaces vanishing within `zero_tol`).
pub fn validate_boundary_point(
    spec: &RegionSpec,
    sampled: &SampledRegion,
    seed_label: u32,
    q: &[f64],
    neighborhood: usize,
) -> Option<Vec<usize>> {
    let tol = &spec.tol;
    if !spec.bx.contains(q) || spec.bx.on_face(q, 10.0 * tol.zero_tol) {
        return None;
    }
    let mut active = Vec::new();
    for (j, s) in spec.surfaces.iter().enumerate() {
        let v = s.f.evaluate(q).ok()?;
        if v < -tol.zero_tol {
            return None;
        }
        if v.abs() <= tol.zero_tol {
            active.push(j);
        }
    }
    if active.is_empty() {
        return None;
    }
    // Near-member check.
    let grid = &sampled.grid;
    let center = grid.nearest_multi(q);
    let n = grid.dim();
    let mut found = false;
    let mut scratch = center.clone();
    chebyshev_scan(&center, grid.res, n, neighborhood, &mut scratch, 0, &mut |m| {
        if !found {
            let f = grid.flat_from_multi(m);
            if sampled.label.get(f).copied() == Some(seed_label) {
                found = true;
            }
        }
    });
    if !found {
        return None;
    }
    Some(active)
}

fn chebyshev_scan(
    center: &[usize],
    res: usize,
    n: usize,
    radius: usize,
    scratch: &mut Vec<usize>,
    axis: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if axis == n {
        visit(scratch);
        return;
    }
    let c = center[axis] as isize;
    let r = radius as isize;
    for d in -r..=r {
        let k = c + d;
        if k < 0 || k >= res as isize {
            continue;
        }
        scratch[axis] = k as usize;
        chebyshev_scan(center, res, n, radius, scratch, axis + 1, visit);
    }
}

fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(items: &[usize], size: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            current.push(items[i]);
            rec(items, size, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, size, 0, &mut current, &mut out);
    out
}

fn column_combinations(cols: &[usize], size: usize) -> Vec<Vec<usize>> {
    combinations(cols, size)
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Subspace test route: does some nonzero normal vector lie in
/// span{e_j : j in N}?
pub fn singular_flag(frame: &NormalFrame, n_set: &VarSet, tol: &Tolerances) -> Tri {
    crate::geometry::subspace_meets(frame, n_set, tol)
}

/// Independent critical-point route for normal points: the differential of
/// the N-projection restricted to the tangent space vanishes exactly when
/// the N-truncation of the unit normal has unit norm. Computed from
/// component norms, not from the SVD, so the two routes can be compared.
pub fn critical_flag_normal(frame: &NormalFrame, n_set: &VarSet, tol: &Tolerances) -> Tri {
    assert_eq!(frame.active.len(), 1);
    let g = &frame.gradients[0];
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Tri::Indeterminate;
    }
    let restricted = n_set
        .iter()
        .map(|i| g[i - 1] * g[i - 1])
        .sum::<f64>()
        .sqrt()
        / norm;
    let deficit = (1.0 - restricted).max(0.0);
    Tri::from_bands(deficit, tol.rank_rel_tol, 10.0 * tol.rank_rel_tol)
}

pub fn classify_record(record: &mut BoundaryPointRecord, ns: &[VarSet], tol: &Tolerances) {
    for n_set in ns {
        let flag = match singular_flag(&record.frame, n_set, tol) {
            Tri::True => NFlag::Singular,
            Tri::Indeterminate => NFlag::Indeterminate,
            Tri::False => {
                if record.is_normal {
                    NFlag::NPoint
                } else {
                    NFlag::NotApplicable
                }
            }
        };
        record.flags.insert(n_set.clone(), flag);
    }
}

/// Enumerates the boundary and classifies every refined sampled point
/// against each coordinate set in `ns`.
pub fn classify_boundary(
    spec: &RegionSpec,
    ns: &[VarSet],
) -> Result<BoundaryEnumeration, RegionError> {
    let mut enumeration = enumerate_boundary(spec)?;
    for r in &mut enumeration.records {
        classify_record(r, ns, &spec.tol);
    }
    Ok(enumeration)
}

// ---------------------------------------------------------------------------
// Critical / singular point solving
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateReason {
    /// |N| + #active > n: the span condition holds vacuously on the whole
    /// stratum.
    DimensionDegenerate,
    /// Every minor is identically zero (cylinder axes aligned with N): the
    /// whole stratum is N-singular.
    IdenticallySingular,
}

#[derive(Debug, Clone)]
pub struct DegenerateStratum {
    pub active: Vec<usize>,
    pub reason: DegenerateReason,
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub point: Vec<f64>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    pub degenerate: Vec<DegenerateStratum>,
}

enum SingularSystem {
    System(PolySystem),
    DimensionDegenerate,
    IdenticallySingular,
}

/// Equations whose zero set is "point on the stratum of `active`, with some
/// nonzero normal vector in span{e_j : j in N}": the active polynomials plus
/// every maximal minor of the gradient matrix restricted to the complement
/// of N. With N empty this is the rank-deficiency locus of the stratum.
fn singular_system(spec: &RegionSpec, active: &[usize], n_set: &VarSet) -> SingularSystem {
    let n = spec.nvars;
    let l = active.len();
    let comp: Vec<usize> = (1..=n).filter(|i| !n_set.contains(*i)).collect();
    if comp.len() < l {
        return SingularSystem::DimensionDegenerate;
    }
    let grads: Vec<Vec<Polynomial>> = active.iter().map(|&j| spec.surfaces[j].f.gradient()).collect();
    let mut polys: Vec<Polynomial> = active.iter().map(|&j| spec.surfaces[j].f.clone()).collect();
    let mut any_minor = false;
    for cols in column_combinations(&comp, l) {
        let mat: Vec<Vec<&Polynomial>> = grads
            .iter()
            .map(|g| cols.iter().map(|&c| &g[c - 1]).collect())
            .collect();
        let det = determinant(&mat);
        if !det.is_zero() {
            polys.push(det);
            any_minor = true;
        }
    }
    if !any_minor {
        return SingularSystem::IdenticallySingular;
    }
    SingularSystem::System(PolySystem::new(polys))
}

fn solver_seeds(
    enumeration: &BoundaryEnumeration,
    active: &[usize],
    pinned: &[(usize, f64)],
    slice_band: f64,
) -> Vec<Vec<f64>> {
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    if active.len() == 1 {
        for r in enumeration.records.iter().filter(|r| r.active.contains(&active[0])) {
            seeds.push(r.point.clone());
        }
    } else {
        for r in &enumeration.records {
            if active.iter().all(|j| r.active.contains(j)) {
                seeds.push(r.point.clone());
            }
        }
        if let Some(extra) = enumeration.multi_seeds.get(active) {
            seeds.extend(extra.iter().cloned());
        }
    }
    if !pinned.is_empty() {
        seeds.retain(|s| pinned.iter().all(|&(i, v)| (s[i] - v).abs() <= slice_band));
    }
    stride_cap(&seeds, MAX_SOLVER_SEEDS)
}

/// Finds refined points of the sampled boundary where some nonzero normal
/// vector of the stratum lies in span{e_j : j in N} (N-singular points; for
/// one-element N and normal points these are exactly the critical points of
/// the coordinate projection). Optional pinned coordinates restrict the
/// search to a fiber slice.
pub fn find_critical_pinned(
    spec: &RegionSpec,
    enumeration: &BoundaryEnumeration,
    n_set: &VarSet,
    pinned: &[(usize, f64)],
) -> CriticalSet {
    let tol = &spec.tol;
    let seed_label = match enumeration.seed_component {
        Some(l) => l,
        None => return CriticalSet::default(),
    };
    let slice_band = 5.0 * enumeration.sampled.grid.max_spacing();
    let mut strata: Vec<Vec<usize>> = (0..spec.surfaces.len()).map(|j| vec![j]).collect();
    for set in enumeration.observed_active_sets() {
        if set.len() >= 2 && !strata.contains(&set) {
            strata.push(set);
        }
    }
    for set in enumeration.multi_seeds.keys() {
        if !strata.contains(set) {
            strata.push(set.clone());
        }
    }
    strata.sort();

    let mut out = CriticalSet::default();
    let mut found: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    for active in &strata {
        let sys = match singular_system(spec, active, n_set) {
            SingularSystem::System(s) => s,
            SingularSystem::DimensionDegenerate => {
                out.degenerate.push(DegenerateStratum {
                    active: active.clone(),
                    reason: DegenerateReason::DimensionDegenerate,
                });
                continue;
            }
            SingularSystem::IdenticallySingular => {
                out.degenerate.push(DegenerateStratum {
                    active: active.clone(),
                    reason: DegenerateReason::IdenticallySingular,
                });
                continue;
            }
        };
        let seeds = solver_seeds(enumeration, active, pinned, slice_band);
        let hits: Vec<(Vec<usize>, Vec<f64>)> = seeds
            .par_iter()
            .filter_map(|seed| {
                let sol = gauss_newton_ls(&sys, seed, pinned, None, tol)?;
                let measured =
                    validate_boundary_point(spec, &enumeration.sampled, seed_label, &sol.point, 2)?;
                if active.iter().all(|j| measured.contains(j)) {
                    Some((measured, sol.point))
                } else {
                    None
                }
            })
            .collect();
        for (measured, point) in hits {
            found.entry(measured).or_default().push(point);
        }
    }
    for (active, points) in found {
        for point in dedup_points(points, tol.dedup_radius()) {
            out.points.push(CriticalPoint {
                point,
                active: active.clone(),
            });
        }
    }
    out.points.sort_by(|a, b| lex_cmp(&a.point, &b.point).then_with(|| a.active.cmp(&b.active)));
    out.degenerate.sort_by(|a, b| a.active.cmp(&b.active));
    out
}

pub fn find_critical(spec: &RegionSpec, n_set: &VarSet) -> Result<CriticalSet, RegionError> {
    let enumeration = enumerate_boundary(spec)?;
    Ok(find_critical_pinned(spec, &enumeration, n_set, &[]))
}

/// Boundary points of a fiber slice: sampled records near the pinned values
/// are re-refined with the pinned coordinates held fixed. Records that fail
/// to re-converge are dropped (no boundary point of the slice nearby).
pub fn slice_boundary(
    spec: &RegionSpec,
    enumeration: &BoundaryEnumeration,
    pinned: &[(usize, f64)],
) -> Vec<BoundaryPointRecord> {
    let tol = &spec.tol;
    let seed_label = match enumeration.seed_component {
        Some(l) => l,
        None => return Vec::new(),
    };
    let slice_band = 5.0 * enumeration.sampled.grid.max_spacing();
    let locality = 2.0 * slice_band * (spec.nvars as f64).sqrt();
    // Group the nearby records by active set so each group shares one
    // system, then refine in parallel.
    let mut groups: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    for r in &enumeration.records {
        if pinned.iter().all(|&(i, v)| (r.point[i] - v).abs() <= slice_band) {
            groups.entry(r.active.clone()).or_default().push(r.point.clone());
        }
    }
    let mut by_active: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    for (active, seeds) in groups {
        let sys = PolySystem::new(active.iter().map(|&j| spec.surfaces[j].f.clone()).collect());
        let refined: Vec<(Vec<usize>, Vec<f64>)> = seeds
            .par_iter()
            .filter_map(|seed| {
                let sol = gauss_newton_ls(&sys, seed, pinned, Some(locality), tol)?;
                let measured =
                    validate_boundary_point(spec, &enumeration.sampled, seed_label, &sol.point, 2)?;
                Some((measured, sol.point))
            })
            .collect();
        for (measured, point) in refined {
            by_active.entry(measured).or_default().push(point);
        }
    }
    let mut records = Vec::new();
    for (active, points) in by_active {
        for point in dedup_points(points, tol.dedup_radius()) {
            let frame = frame_at(spec, &active, &point);
            records.push(BoundaryPointRecord {
                point,
                is_normal: active.len() == 1,
                active: active.clone(),
                frame,
                flags: BTreeMap::new(),
            });
        }
    }
    records.sort_by(|a, b| lex_cmp(&a.point, &b.point).then_with(|| a.active.cmp(&b.active)));
    records
}

/// Solves for points of a fiber slice lying on several surfaces at once
/// (non-normal sliced points that plain slice sampling may miss).
pub fn slice_stratum_points(
    spec: &RegionSpec,
    enumeration: &BoundaryEnumeration,
    active: &[usize],
    pinned: &[(usize, f64)],
) -> Vec<Vec<f64>> {
    let tol = &spec.tol;
    let seed_label = match enumeration.seed_component {
        Some(l) => l,
        None => return Vec::new(),
    };
    let slice_band = 5.0 * enumeration.sampled.grid.max_spacing();
    let sys = PolySystem::new(active.iter().map(|&j| spec.surfaces[j].f.clone()).collect());
    let mut seeds: Vec<Vec<f64>> = enumeration
        .records
        .iter()
        .filter(|r| {
            r.active.iter().any(|j| active.contains(j))
                && pinned.iter().all(|&(i, v)| (r.point[i] - v).abs() <= slice_band)
        })
        .map(|r| r.point.clone())
        .collect();
    if let Some(extra) = enumeration.multi_seeds.get(active) {
        seeds.extend(
            extra
                .iter()
                .filter(|s| pinned.iter().all(|&(i, v)| (s[i] - v).abs() <= slice_band))
                .cloned(),
        );
    }
    let mut hits = Vec::new();
    for seed in stride_cap(&seeds, MAX_SOLVER_SEEDS) {
        if let Some(sol) = gauss_newton_ls(&sys, &seed, pinned, None, tol) {
            if let Some(measured) =
                validate_boundary_point(spec, &enumeration.sampled, seed_label, &sol.point, 2)
            {
                if active.iter().all(|j| measured.contains(j)) {
                    hits.push(sol.point);
                }
            }
        }
    }
    dedup_points(hits, tol.dedup_radius())
}

// ---------------------------------------------------------------------------
// Tangency sweep and the region verifier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TangencyWitness {
    pub point: Vec<f64>,
    pub active: Vec<usize>,
    pub rank: usize,
    pub indeterminate: bool,
    pub ratio: f64,
}

/// Hunts for boundary points whose normal frame is rank-deficient, by
/// solving "on the stratum and all maximal minors of the gradient matrix
/// vanish" from every multi-surface seed. Sampling alone misses these:
/// refined samples land near, not on, a tangency.
pub fn find_rank_deficiencies(
    spec: &RegionSpec,
    enumeration: &BoundaryEnumeration,
) -> Vec<TangencyWitness> {
    let empty = VarSet::empty();
    let mut witnesses = Vec::new();
    let mut sets: Vec<Vec<usize>> = enumeration
        .observed_active_sets()
        .into_iter()
        .filter(|s| s.len() >= 2)
        .collect();
    for set in enumeration.multi_seeds.keys() {
        if !sets.contains(set) {
            sets.push(set.clone());
        }
    }
    // Single-surface smoothness: gradient must not vanish on the zero set.
    for j in 0..spec.surfaces.len() {
        sets.push(vec![j]);
    }
    sets.sort();
    sets.dedup();

    let seed_label = match enumeration.seed_component {
        Some(l) => l,
        None => return witnesses,
    };
    for active in sets {
        let sys = match singular_system(spec, &active, &empty) {
            SingularSystem::System(s) => s,
            _ => continue,
        };
        let seeds = solver_seeds(enumeration, &active, &[], 0.0);
        let hits: Vec<Vec<f64>> = seeds
            .par_iter()
            .filter_map(|seed| {
                let sol = gauss_newton_ls(&sys, seed, &[], None, &spec.tol)?;
                let measured =
                    validate_boundary_point(spec, &enumeration.sampled, seed_label, &sol.point, 2)?;
                if active.iter().all(|j| measured.contains(j)) {
                    Some(sol.point)
                } else {
                    None
                }
            })
            .collect();
        for point in dedup_points(hits, spec.tol.dedup_radius()) {
            let active_measured =
                validate_boundary_point(spec, &enumeration.sampled, seed_label, &point, 2)
                    .unwrap_or_else(|| active.clone());
            let frame = frame_at(spec, &active_measured, &point);
            if frame.numerical_rank < frame.active.len() || frame.rank_indeterminate {
                witnesses.push(TangencyWitness {
                    point,
                    active: active_measured,
                    rank: frame.numerical_rank,
                    indeterminate: frame.rank_indeterminate,
                    ratio: frame.rank_ratio,
                });
            }
        }
    }
    witnesses.sort_by(|a, b| lex_cmp(&a.point, &b.point));
    witnesses
}

/// Outcome of the two defining conditions, checked on the sampled window:
/// (1) the region is the seed component of the all-positive set and every
/// surface actually meets its sampled boundary; (2) at every refined
/// boundary point the normal frame has full rank equal to the number of
/// active surfaces, and the tangency sweep finds no rank-deficient point.
#[derive(Debug)]
pub struct Def1Outcome {
    pub report: ConditionReport,
    pub enumeration: BoundaryEnumeration,
}

pub fn check_definition1(spec: &RegionSpec) -> Result<Def1Outcome, RegionError> {
    let enumeration = enumerate_boundary(spec)?;
    let mut report = ConditionReport::new("definition1");

    // Condition 1.
    let mut cond1 = Verdict::Pass;
    if enumeration.seed_component.is_none() {
        cond1 = Verdict::Fail;
        report.witnesses.push(Witness {
            condition: "def1-cond1".into(),
            block: None,
            points: vec![spec.seed.clone()],
            diagnostic: "no sampled member of the region near the seed at this grid resolution"
                .into(),
        });
    } else {
        for (j, s) in spec.surfaces.iter().enumerate() {
            let met = enumeration.records.iter().any(|r| r.active.contains(&j));
            if !met {
                cond1 = Verdict::Fail;
                report.witnesses.push(Witness {
                    condition: "def1-cond1".into(),
                    block: None,
                    points: vec![],
                    diagnostic: format!(
                        "surface {} does not meet the sampled boundary of the region within the box",
                        s.label
                    ),
                });
            }
        }
    }
    if enumeration.touches_box {
        report.caveat("verified within box only (region touches a box face)");
    }
    if !enumeration.refinement_failures.is_empty() {
        report.caveat("some boundary refinements failed; see tangency sweep");
    }
    report.push("def1-cond1", cond1);

    // Condition 2.
    let mut cond2 = Verdict::Pass;
    for r in &enumeration.records {
        if r.frame.numerical_rank < r.active.len() && !r.frame.rank_indeterminate {
            cond2 = Verdict::Fail;
            report.witnesses.push(Witness {
                condition: "def1-cond2".into(),
                block: None,
                points: vec![r.point.clone()],
                diagnostic: format!(
                    "normal frame rank {} < {} active surfaces",
                    r.frame.numerical_rank,
                    r.active.len()
                ),
            });
        } else if r.frame.rank_indeterminate {
            cond2 = cond2.and(Verdict::Indeterminate);
            report.witnesses.push(Witness {
                condition: "def1-cond2".into(),
                block: None,
                points: vec![r.point.clone()],
                diagnostic: format!(
                    "rank decision indeterminate (singular-value ratio {:.3e})",
                    r.frame.rank_ratio
                ),
            });
        }
    }
    for w in find_rank_deficiencies(spec, &enumeration) {
        if w.indeterminate {
            cond2 = cond2.and(Verdict::Indeterminate);
        } else {
            cond2 = Verdict::Fail;
        }
        report.witnesses.push(Witness {
            condition: "def1-cond2".into(),
            block: None,
            points: vec![w.point.clone()],
            diagnostic: format!(
                "tangency sweep: normal frame rank {} < {} active surfaces (ratio {:.3e})",
                w.rank,
                w.active.len(),
                w.ratio
            ),
        });
    }
    report.push("def1-cond2", cond2);
    report.finalize();
    Ok(Def1Outcome {
        report,
        enumeration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Tolerances;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn disk_spec() -> RegionSpec {
        let f = Polynomial::parse("1-x1^2-x2^2", 2).unwrap();
        RegionSpec::new(
            2,
            vec![CylinderSurface::new("S1", f).unwrap()],
            vec![0.0, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap()
    }

    fn example1_spec() -> RegionSpec {
        let f1 = Polynomial::parse("1-(x1-1/2)^2-x2^2", 3).unwrap();
        let f2 = Polynomial::parse("1-(x1+1/2)^2-x3^2", 3).unwrap();
        RegionSpec::new(
            3,
            vec![
                CylinderSurface::new("S1", f1).unwrap(),
                CylinderSurface::new("S2", f2).unwrap(),
            ],
            vec![0.0, 0.0, 0.0],
            BoundingBox::centered(3, 2.0),
            tols(),
        )
        .unwrap()
    }

    fn tangential_spec() -> RegionSpec {
        // Both cylinders centered at x1 = 1/2: tangential contact at
        // (-1/2, 0, 0) and (3/2, 0, 0).
        let f1 = Polynomial::parse("1-(x1-1/2)^2-x2^2", 3).unwrap();
        let f2 = Polynomial::parse("1-(x1-1/2)^2-x3^2", 3).unwrap();
        RegionSpec::new(
            3,
            vec![
                CylinderSurface::new("S1", f1).unwrap(),
                CylinderSurface::new("S2", f2).unwrap(),
            ],
            vec![0.5, 0.0, 0.0],
            BoundingBox::centered(3, 2.0),
            tols(),
        )
        .unwrap()
    }

    #[test]
    fn seed_positivity_is_validated() {
        let f = Polynomial::parse("1-x1^2-x2^2", 2).unwrap();
        let err = RegionSpec::new(
            2,
            vec![CylinderSurface::new("S1", f).unwrap()],
            vec![1.5, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        );
        assert!(matches!(err, Err(RegionError::SeedNotPositive { .. })));
    }

    #[test]
    fn disk_passes_both_conditions() {
        let out = check_definition1(&disk_spec()).unwrap();
        assert_eq!(out.report.verdict_of("def1-cond1"), Some(Verdict::Pass));
        assert_eq!(out.report.verdict_of("def1-cond2"), Some(Verdict::Pass));
        assert!(!out.enumeration.records.is_empty());
        // All boundary records lie on the circle.
        for r in &out.enumeration.records {
            let v = 1.0 - r.point[0] * r.point[0] - r.point[1] * r.point[1];
            assert!(v.abs() <= 1e-8);
        }
    }

    #[test]
    fn two_cylinder_region_passes_both_conditions() {
        let out = check_definition1(&example1_spec()).unwrap();
        assert_eq!(out.report.verdict_of("def1-cond1"), Some(Verdict::Pass));
        assert_eq!(out.report.verdict_of("def1-cond2"), Some(Verdict::Pass));
        // Pair records exist and have rank 2.
        let pairs: Vec<_> = out
            .enumeration
            .records
            .iter()
            .filter(|r| r.active.len() == 2)
            .collect();
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|r| r.frame.numerical_rank == 2));
    }

    #[test]
    fn tangential_variant_fails_condition_2_near_witness() {
        let out = check_definition1(&tangential_spec()).unwrap();
        assert_eq!(out.report.verdict_of("def1-cond2"), Some(Verdict::Fail));
        let near = out.report.witnesses.iter().any(|w| {
            w.condition == "def1-cond2"
                && w.points.iter().any(|p| {
                    let d = ((p[0] + 0.5).powi(2) + p[1].powi(2) + p[2].powi(2)).sqrt();
                    d <= 1e-3
                })
                && w.diagnostic.contains("rank 1 < 2")
        });
        assert!(near, "expected a rank-1 witness near (-1/2, 0, 0): {:?}", out.report.witnesses);
    }

    #[test]
    fn disk_classification_and_critical_points() {
        let spec = disk_spec();
        let n1 = VarSet::singleton(1);
        let enumeration = classify_boundary(&spec, std::slice::from_ref(&n1)).unwrap();
        for r in &enumeration.records {
            match r.flags[&n1] {
                NFlag::Singular | NFlag::Indeterminate => {
                    let near_pole = ((r.point[0].abs() - 1.0).abs() < 5e-3) && r.point[1].abs() < 5e-3;
                    assert!(near_pole, "spurious singular flag at {:?}", r.point);
                }
                NFlag::NPoint => {}
                NFlag::NotApplicable => panic!("disk has only normal points"),
            }
        }
        let crits = find_critical(&spec, &n1).unwrap();
        assert!(!crits.points.is_empty());
        for c in &crits.points {
            assert!(c.point[1].abs() <= 1e-8);
            assert!((c.point[0].abs() - 1.0).abs() <= 1e-8);
        }
        let xs: Vec<f64> = crits.points.iter().map(|c| c.point[0]).collect();
        assert!(xs.iter().any(|&x| (x - 1.0).abs() < 1e-8));
        assert!(xs.iter().any(|&x| (x + 1.0).abs() < 1e-8));
    }

    #[test]
    fn circle_full_n_is_dimension_degenerate() {
        let spec = disk_spec();
        let crits = find_critical(&spec, &VarSet::new([1, 2])).unwrap();
        assert!(crits
            .degenerate
            .iter()
            .any(|d| d.reason == DegenerateReason::DimensionDegenerate));
    }

    #[test]
    fn sphere_singular_set_is_the_equator_circle() {
        let f = Polynomial::parse("1-(x1-1/2)^2-x2^2-x3^2", 3).unwrap();
        let spec = RegionSpec::new(
            3,
            vec![CylinderSurface::new("S1", f).unwrap()],
            vec![0.5, 0.0, 0.0],
            BoundingBox::centered(3, 2.0),
            tols(),
        )
        .unwrap();
        let crits = find_critical(&spec, &VarSet::new([1, 2])).unwrap();
        assert!(crits.points.len() >= 8, "expected many equator samples");
        for c in &crits.points {
            assert!(c.point[2].abs() <= 1e-9, "x3 = {}", c.point[2]);
            let on_circle = (1.0 - (c.point[0] - 0.5).powi(2) - c.point[1].powi(2)).abs();
            assert!(on_circle <= 1e-8);
        }
    }

    #[test]
    fn proposition_singular_iff_critical_on_normal_points() {
        let spec = example1_spec();
        let ns = [VarSet::singleton(1), VarSet::singleton(2), VarSet::singleton(3)];
        let enumeration = classify_boundary(&spec, &ns).unwrap();
        let mut checked = 0;
        for r in enumeration.records.iter().filter(|r| r.is_normal) {
            for n in &ns {
                let a = singular_flag(&r.frame, n, &spec.tol);
                let b = critical_flag_normal(&r.frame, n, &spec.tol);
                assert_eq!(a, b, "routes disagree at {:?} for {}", r.point, n);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn nested_n_point_implication() {
        let spec = example1_spec();
        let n1 = VarSet::singleton(1);
        let n12 = VarSet::new([1, 2]);
        let enumeration = classify_boundary(&spec, &[n1.clone(), n12.clone()]).unwrap();
        for r in &enumeration.records {
            // An N-point for the larger set must be an N-point for the
            // smaller one.
            if r.flags[&n12] == NFlag::NPoint {
                assert_eq!(r.flags[&n1], NFlag::NPoint, "at {:?}", r.point);
            }
        }
    }

    #[test]
    fn find_critical_points_carry_singular_flag() {
        let spec = disk_spec();
        let n1 = VarSet::singleton(1);
        let crits = find_critical(&spec, &n1).unwrap();
        for c in &crits.points {
            let frame = frame_at(&spec, &c.active, &c.point);
            assert_eq!(singular_flag(&frame, &n1, &spec.tol), Tri::True);
        }
    }

    #[test]
    fn scale_invariance_of_verdicts_and_flags() {
        use crate::poly::Rational;
        use num_bigint::BigInt;
        let spec = disk_spec();
        let scaled_f = spec.surfaces[0]
            .f
            .scale(&Rational::new(BigInt::from(3), BigInt::from(1)));
        let scaled = RegionSpec::new(
            2,
            vec![CylinderSurface::new("S1", scaled_f).unwrap()],
            vec![0.0, 0.0],
            spec.bx.clone(),
            spec.tol,
        )
        .unwrap();
        let a = check_definition1(&spec).unwrap();
        let b = check_definition1(&scaled).unwrap();
        assert_eq!(a.report.conditions, b.report.conditions);
        let n1 = VarSet::singleton(1);
        let ca = find_critical(&spec, &n1).unwrap();
        let cb = find_critical(&scaled, &n1).unwrap();
        let xs = |c: &CriticalSet| {
            let mut v: Vec<i64> = c.points.iter().map(|p| (p.point[0] * 1e6).round() as i64).collect();
            v.sort();
            v.dedup();
            v
        };
        assert_eq!(xs(&ca), xs(&cb));
    }
}
