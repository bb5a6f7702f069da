//! Numerical primitives: grid sampling of sign regions with connected
//! component labeling, Newton refinement onto implicit varieties,
//! normal-frame construction, and rank / subspace-intersection tests with
//! explicit tolerances.
//!
//! Every decision backed by singular values is three-valued: clear pass,
//! clear fail, or indeterminate when the deciding ratio falls within one
//! decade of its threshold. Verifiers never silently certify a borderline
//! configuration.

use crate::poly::{Polynomial, Rational};
use nalgebra::DMatrix;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum GeomError {
    #[error("box intervals must satisfy lo < hi (axis {axis})")]
    BadInterval { axis: usize },
    #[error("tolerances out of range: {0}")]
    BadTolerances(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Axis-aligned closed box, the desk-scale verification window.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeomError> {
        if lo.len() != hi.len() {
            return Err(GeomError::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (axis, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(GeomError::BadInterval { axis });
            }
        }
        Ok(BoundingBox { lo, hi })
    }

    /// The cube [-w, w]^n.
    pub fn centered(n: usize, w: f64) -> Self {
        BoundingBox::new(vec![-w; n], vec![w; n]).expect("w > 0")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (a, b))| x >= a && x <= b)
    }

    /// True when some coordinate of `p` is within `band` of a box face.
    pub fn on_face(&self, p: &[f64], band: f64) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(x, (a, b))| (x - a).abs() <= band || (b - x).abs() <= band)
    }

    /// Sub-box spanned by the listed 1-based coordinate axes, in their order.
    pub fn project(&self, axes: &[usize]) -> BoundingBox {
        let lo = axes.iter().map(|&i| self.lo[i - 1]).collect();
        let hi = axes.iter().map(|&i| self.hi[i - 1]).collect();
        BoundingBox { lo, hi }
    }
}

/// Numeric thresholds shared by all verifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// |f(p)| below which p is treated as lying on the zero set, after
    /// refinement.
    pub zero_tol: f64,
    /// Singular values below `rank_rel_tol` x largest are treated as zero.
    pub rank_rel_tol: f64,
    pub newton_max_iter: usize,
    /// Grid samples per axis.
    pub grid_res: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            zero_tol: 1e-9,
            rank_rel_tol: 1e-6,
            newton_max_iter: 50,
            grid_res: 64,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.zero_tol > 0.0 && self.zero_tol < 1e-4) {
            return Err(GeomError::BadTolerances(format!(
                "zero_tol {} must lie in (0, 1e-4)",
                self.zero_tol
            )));
        }
        if !(self.rank_rel_tol > 0.0) {
            return Err(GeomError::BadTolerances("rank_rel_tol must be positive".into()));
        }
        if self.newton_max_iter == 0 {
            return Err(GeomError::BadTolerances("newton_max_iter must be positive".into()));
        }
        if self.grid_res < 8 {
            return Err(GeomError::BadTolerances("grid_res must be at least 8".into()));
        }
        Ok(())
    }

    /// A surface within this band of zero at a refined point is suspicious
    /// enough to retry refinement with it included in the active set.
    pub fn activation_band(&self) -> f64 {
        1e-3
    }

    /// Refined points closer than this are treated as the same point.
    pub fn dedup_radius(&self) -> f64 {
        10.0 * self.zero_tol
    }
}

/// Three-valued outcome of a thresholded numeric test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    True,
    False,
    Indeterminate,
}

impl Tri {
    pub fn is_true(self) -> bool {
        self == Tri::True
    }
    pub fn is_false(self) -> bool {
        self == Tri::False
    }
    pub fn from_bands(value: f64, true_below: f64, false_above: f64) -> Tri {
        if value <= true_below {
            Tri::True
        } else if value >= false_above {
            Tri::False
        } else {
            Tri::Indeterminate
        }
    }
}

/// Numerical rank with an indeterminacy band: a singular-value ratio within
/// one decade of the threshold makes the decision indeterminate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankInfo {
    pub rank: usize,
    pub indeterminate: bool,
    /// The ratio sigma_i / sigma_max closest to the threshold in log scale
    /// (0 when there is none).
    pub worst_ratio: f64,
}

pub fn rank_from_singular_values(svals: &[f64], rel_tol: f64) -> RankInfo {
    let smax = svals.iter().cloned().fold(0.0f64, f64::max);
    if smax < 1e-14 {
        return RankInfo {
            rank: 0,
            indeterminate: false,
            worst_ratio: 0.0,
        };
    }
    let mut rank = 0;
    let mut indeterminate = false;
    let mut worst_ratio = f64::INFINITY;
    let mut worst_dist = f64::INFINITY;
    for &s in svals {
        let r = s / smax;
        if r > rel_tol {
            rank += 1;
        }
        if r > 0.0 {
            let dist = (r.log10() - rel_tol.log10()).abs();
            if dist < worst_dist {
                worst_dist = dist;
                worst_ratio = r;
            }
            if r > rel_tol / 10.0 && r < rel_tol * 10.0 {
                indeterminate = true;
            }
        }
    }
    RankInfo {
        rank,
        indeterminate,
        worst_ratio: if worst_ratio.is_finite() { worst_ratio } else { 0.0 },
    }
}

fn sorted_singular_values(mat: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = mat.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Orthonormal basis of the row space (rows of the result), keeping right
/// singular vectors whose singular value exceeds `rel_tol` x the largest.
fn row_space_basis(mat: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = mat.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut pairs: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let smax = pairs.first().map(|p| p.0).unwrap_or(0.0);
    let keep: Vec<usize> = pairs
        .iter()
        .filter(|(s, _)| smax > 1e-14 && *s > rel_tol * smax)
        .map(|(_, i)| *i)
        .collect();
    let mut basis = DMatrix::zeros(keep.len(), mat.ncols());
    for (r, &i) in keep.iter().enumerate() {
        basis.set_row(r, &vt.row(i));
    }
    basis
}

/// A refined boundary point together with the gradients of its active
/// surfaces and the numerical rank of the stacked (row-normalized)
/// gradients. The rank equals the codimension of the tangent intersection.
#[derive(Debug, Clone)]
pub struct NormalFrame {
    pub point: Vec<f64>,
    /// Indices of the active surfaces, in ascending order.
    pub active: Vec<usize>,
    pub gradients: Vec<Vec<f64>>,
    pub numerical_rank: usize,
    pub rank_indeterminate: bool,
    pub rank_ratio: f64,
}

impl NormalFrame {
    pub fn dim(&self) -> usize {
        self.point.len()
    }
}

/// Rows are normalized before the singular value decomposition so that the
/// rank decision is invariant under positive rescaling of any surface
/// polynomial.
pub fn build_frame(
    point: Vec<f64>,
    active: Vec<usize>,
    gradients: Vec<Vec<f64>>,
    tol: &Tolerances,
) -> NormalFrame {
    assert_eq!(active.len(), gradients.len());
    let n = point.len();
    let mut mat = DMatrix::zeros(gradients.len(), n);
    for (r, g) in gradients.iter().enumerate() {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (c, x) in g.iter().enumerate() {
                mat[(r, c)] = x / norm;
            }
        }
    }
    let info = rank_from_singular_values(&sorted_singular_values(&mat), tol.rank_rel_tol);
    NormalFrame {
        point,
        active,
        gradients,
        numerical_rank: info.rank.min(n),
        rank_indeterminate: info.indeterminate,
        rank_ratio: info.worst_ratio,
    }
}

fn normalized_gradient_matrix(frame: &NormalFrame) -> DMatrix<f64> {
    let n = frame.dim();
    let mut mat = DMatrix::zeros(frame.gradients.len(), n);
    for (r, g) in frame.gradients.iter().enumerate() {
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (c, x) in g.iter().enumerate() {
                mat[(r, c)] = x / norm;
            }
        }
    }
    mat
}

/// Deficit 1 - cos(theta) of the smallest principal angle between the span
/// of the frame's gradients and span{e_j : j in n_set}.
pub fn principal_cos_deficit(frame: &NormalFrame, n_set: &crate::poly::VarSet) -> f64 {
    let basis = row_space_basis(&normalized_gradient_matrix(frame), 1e-12);
    if basis.nrows() == 0 || n_set.is_empty() {
        return 1.0;
    }
    let cols: Vec<usize> = n_set.iter().map(|i| i - 1).collect();
    let mut cross = DMatrix::zeros(basis.nrows(), cols.len());
    for (c, &j) in cols.iter().enumerate() {
        for r in 0..basis.nrows() {
            cross[(r, c)] = basis[(r, j)];
        }
    }
    let smax = sorted_singular_values(&cross).first().cloned().unwrap_or(0.0);
    (1.0 - smax).max(0.0)
}

/// Does span(gradients) intersect span{e_j : j in n_set} nontrivially?
///
/// True when the smallest principal angle between the two subspaces is below
/// the threshold derived from `rank_rel_tol` (the largest singular value of
/// the cross-Gram matrix reaches 1 within tolerance).
pub fn subspace_meets(frame: &NormalFrame, n_set: &crate::poly::VarSet, tol: &Tolerances) -> Tri {
    if frame.rank_indeterminate {
        return Tri::Indeterminate;
    }
    let deficit = principal_cos_deficit(frame, n_set);
    Tri::from_bands(deficit, tol.rank_rel_tol, 10.0 * tol.rank_rel_tol)
}

/// Tests whether the `n_set`-coordinate truncations of one normal vector per
/// frame are linearly independent at `rank_rel_tol`. Each frame must have
/// exactly one active surface.
pub fn projected_independence(
    frames: &[&NormalFrame],
    n_set: &crate::poly::VarSet,
    tol: &Tolerances,
) -> (Tri, Option<String>) {
    for f in frames {
        assert_eq!(f.active.len(), 1, "projected_independence expects normal points");
    }
    let k = n_set.len();
    if frames.len() > k {
        return (
            Tri::False,
            Some(format!(
                "{} frames cannot be independent in {} projected coordinates",
                frames.len(),
                k
            )),
        );
    }
    if frames.is_empty() {
        return (Tri::True, None);
    }
    let cols: Vec<usize> = n_set.iter().map(|i| i - 1).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(frames.len());
    for f in frames {
        let g = &f.gradients[0];
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (Tri::False, Some("zero normal vector".into()));
        }
        let trunc: Vec<f64> = cols.iter().map(|&c| g[c] / norm).collect();
        let tnorm = trunc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if tnorm <= tol.rank_rel_tol {
            return (
                Tri::False,
                Some("a truncated normal vector is numerically zero".into()),
            );
        }
        rows.push(trunc.iter().map(|x| x / tnorm).collect());
    }
    let mut mat = DMatrix::zeros(rows.len(), k);
    for (r, row) in rows.iter().enumerate() {
        for (c, x) in row.iter().enumerate() {
            mat[(r, c)] = *x;
        }
    }
    let info = rank_from_singular_values(&sorted_singular_values(&mat), tol.rank_rel_tol);
    if info.indeterminate {
        return (Tri::Indeterminate, Some(format!("rank ratio {:.3e}", info.worst_ratio)));
    }
    if info.rank == frames.len() {
        (Tri::True, None)
    } else {
        (
            Tri::False,
            Some(format!(
                "projected rank {} < {} frames",
                info.rank,
                frames.len()
            )),
        )
    }
}

// ---------------------------------------------------------------------------
// Grid sampling and flood fill
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

/// Regular lattice over a box, `res` nodes per axis, endpoints included.
#[derive(Debug, Clone)]
pub struct Grid {
    pub bx: BoundingBox,
    pub res: usize,
}

impl Grid {
    pub fn new(bx: BoundingBox, res: usize) -> Self {
        assert!(res >= 2);
        Grid { bx, res }
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        let lo = self.bx.lo()[axis];
        let hi = self.bx.hi()[axis];
        lo + (hi - lo) * (k as f64) / ((self.res - 1) as f64)
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bx.hi()[axis] - self.bx.lo()[axis]) / ((self.res - 1) as f64)
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn cell_diagonal(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn multi_from_flat(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            out[axis] = flat % self.res;
            flat /= self.res;
        }
    }

    pub fn flat_from_multi(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        for &k in multi {
            flat = flat * self.res + k;
        }
        flat
    }

    pub fn point_from_multi(&self, multi: &[usize], out: &mut [f64]) {
        for (axis, &k) in multi.iter().enumerate() {
            out[axis] = self.coord(axis, k);
        }
    }

    pub fn node_point(&self, flat: usize) -> Vec<f64> {
        let mut multi = vec![0usize; self.dim()];
        self.multi_from_flat(flat, &mut multi);
        let mut p = vec![0.0; self.dim()];
        self.point_from_multi(&multi, &mut p);
        p
    }

    /// Multi-index of the lattice node nearest to `p`, clamped to the grid.
    pub fn nearest_multi(&self, p: &[f64]) -> Vec<usize> {
        (0..self.dim())
            .map(|a| {
                let t = (p[a] - self.bx.lo()[a]) / self.spacing(a);
                t.round().clamp(0.0, (self.res - 1) as f64) as usize
            })
            .collect()
    }
}

/// Flattened polynomial for fast approximate evaluation in grid sweeps.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    nvars: usize,
    terms: Vec<(f64, Vec<(u16, u32)>)>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let terms = p
            .terms()
            .map(|(exps, coeff)| {
                let sparse: Vec<(u16, u32)> = exps
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| (i as u16, e))
                    .collect();
                (crate::poly::rational_to_f64(coeff), sparse)
            })
            .collect();
        CompiledPoly {
            nvars: p.nvars(),
            terms,
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        let mut acc = 0.0;
        for (c, sparse) in &self.terms {
            let mut term = *c;
            for &(i, e) in sparse {
                term *= point[i as usize].powi(e as i32);
            }
            acc += term;
        }
        acc
    }
}

/// Grid-sampled sign region with connected component labels.
#[derive(Debug, Clone)]
pub struct SampledRegion {
    pub grid: Grid,
    pub member: Vec<bool>,
    /// 0 for non-members, 1..=n_components otherwise. Components are labeled
    /// in node index order, so the labeling is deterministic.
    pub label: Vec<u32>,
    pub n_components: u32,
}

impl SampledRegion {
    pub fn is_empty(&self) -> bool {
        self.n_components == 0
    }

    /// Label of the component containing the node nearest to `p`, scanning a
    /// Chebyshev-1 neighborhood when the nearest node itself is not a member.
    pub fn component_near(&self, p: &[f64]) -> Option<u32> {
        let n = self.grid.dim();
        let multi = self.grid.nearest_multi(p);
        let flat = self.grid.flat_from_multi(&multi);
        if self.member[flat] {
            return Some(self.label[flat]);
        }
        let mut found = None;
        let mut visit = |m: &[usize]| {
            let f = self.grid.flat_from_multi(m);
            if self.member[f] && found.is_none() {
                found = Some(self.label[f]);
            }
        };
        let mut neighbor = multi.clone();
        for_each_chebyshev_neighbor(&multi, self.grid.res, n, &mut neighbor, 0, &mut visit);
        found
    }

    /// Does the component touch any box face?
    pub fn component_touches_face(&self, label: u32) -> bool {
        let n = self.grid.dim();
        let mut multi = vec![0usize; n];
        for flat in 0..self.grid.len() {
            if self.label[flat] != label {
                continue;
            }
            self.grid.multi_from_flat(flat, &mut multi);
            if multi.iter().any(|&k| k == 0 || k == self.grid.res - 1) {
                return true;
            }
        }
        false
    }
}

fn for_each_chebyshev_neighbor(
    center: &[usize],
    res: usize,
    n: usize,
    scratch: &mut Vec<usize>,
    axis: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if axis == n {
        visit(scratch);
        return;
    }
    let c = center[axis] as isize;
    for d in -1isize..=1 {
        let k = c + d;
        if k < 0 || k >= res as isize {
            continue;
        }
        scratch[axis] = k as usize;
        for_each_chebyshev_neighbor(center, res, n, scratch, axis + 1, visit);
    }
}

/// Samples the grid nodes where every sign constraint holds strictly and
/// labels connected components by flood fill over face-adjacent members.
/// Deterministic given inputs: signs within 1e-12 of zero are resolved by
/// exact rational evaluation.
pub fn sample_grid(
    constraints: &[(&Polynomial, Sign)],
    bx: &BoundingBox,
    tol: &Tolerances,
) -> SampledRegion {
    let grid = Grid::new(bx.clone(), tol.grid_res);
    let n = grid.dim();
    let compiled: Vec<(CompiledPoly, Sign)> = constraints
        .iter()
        .map(|(p, s)| (CompiledPoly::new(p), *s))
        .collect();

    let len = grid.len();
    let member: Vec<bool> = (0..len)
        .into_par_iter()
        .map(|flat| {
            let mut multi = vec![0usize; n];
            grid.multi_from_flat(flat, &mut multi);
            let mut point = vec![0.0; n];
            grid.point_from_multi(&multi, &mut point);
            compiled.iter().zip(constraints).all(|((cp, sign), (poly, _))| {
                let v = cp.eval(&point);
                let v = if v.abs() <= 1e-12 {
                    // Near-zero: decide the sign exactly.
                    poly.evaluate_rational_of_floats(&point)
                        .map(|r| rational_sign(&r))
                        .unwrap_or(0.0)
                } else {
                    v
                };
                match sign {
                    Sign::Positive => v > 0.0,
                    Sign::Negative => v < 0.0,
                }
            })
        })
        .collect();

    let (label, n_components) = flood_fill(&grid, &member);
    SampledRegion {
        grid,
        member,
        label,
        n_components,
    }
}

/// Connected component labeling over face-adjacent member nodes. Labels are
/// assigned in node index order, so the output is deterministic.
pub fn flood_fill(grid: &Grid, member: &[bool]) -> (Vec<u32>, u32) {
    let n = grid.dim();
    let len = grid.len();
    let mut label = vec![0u32; len];
    let mut n_components = 0u32;
    let mut queue: Vec<usize> = Vec::new();
    let mut multi = vec![0usize; n];
    for start in 0..len {
        if !member[start] || label[start] != 0 {
            continue;
        }
        n_components += 1;
        label[start] = n_components;
        queue.push(start);
        while let Some(node) = queue.pop() {
            grid.multi_from_flat(node, &mut multi);
            for axis in 0..n {
                let stride = grid.res.pow((n - 1 - axis) as u32);
                if multi[axis] > 0 {
                    let nb = node - stride;
                    if member[nb] && label[nb] == 0 {
                        label[nb] = n_components;
                        queue.push(nb);
                    }
                }
                if multi[axis] + 1 < grid.res {
                    let nb = node + stride;
                    if member[nb] && label[nb] == 0 {
                        label[nb] = n_components;
                        queue.push(nb);
                    }
                }
            }
        }
    }
    (label, n_components)
}

fn rational_sign(r: &Rational) -> f64 {
    use num_traits::Zero;
    if r.is_zero() {
        0.0
    } else if r > &Rational::zero() {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// Newton refinement and Gauss-Newton least squares
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Error)]
pub enum RefineError {
    #[error("did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("rank-deficient Jacobian (singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("left the locality bound around the start point")]
    LeftLocality,
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub point: Vec<f64>,
    pub iterations: usize,
    /// Max absolute residual over the system, computed exactly at the
    /// returned floating point.
    pub residual: f64,
}

/// A polynomial system with cached symbolic gradients and compiled forms,
/// shared across many refinement calls.
#[derive(Debug, Clone)]
pub struct PolySystem {
    pub polys: Vec<Polynomial>,
    grads: Vec<Vec<Polynomial>>,
    compiled: Vec<CompiledPoly>,
    compiled_grads: Vec<Vec<CompiledPoly>>,
    nvars: usize,
}

impl PolySystem {
    pub fn new(polys: Vec<Polynomial>) -> Self {
        assert!(!polys.is_empty());
        let nvars = polys[0].nvars();
        assert!(polys.iter().all(|p| p.nvars() == nvars));
        let grads: Vec<Vec<Polynomial>> = polys.iter().map(|p| p.gradient()).collect();
        let compiled = polys.iter().map(CompiledPoly::new).collect();
        let compiled_grads = grads
            .iter()
            .map(|g| g.iter().map(CompiledPoly::new).collect())
            .collect();
        PolySystem {
            polys,
            grads,
            compiled,
            compiled_grads,
            nvars,
        }
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn gradients(&self) -> &[Vec<Polynomial>] {
        &self.grads
    }

    pub fn eval_f64(&self, i: usize, x: &[f64]) -> f64 {
        self.compiled[i].eval(x)
    }

    pub fn eval_gradient_f64(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.compiled_grads[i].iter().map(|c| c.eval(x)).collect()
    }

    /// Gradient of equation `i` through the exact evaluation path.
    pub fn eval_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.grads[i]
            .iter()
            .map(|p| p.evaluate(x).unwrap_or(f64::NAN))
            .collect()
    }

    fn residual_f64(&self, x: &[f64]) -> Vec<f64> {
        self.compiled.iter().map(|c| c.eval(x)).collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.len(), self.nvars);
        for (r, grow) in self.compiled_grads.iter().enumerate() {
            for (c, g) in grow.iter().enumerate() {
                j[(r, c)] = g.eval(x);
            }
        }
        j
    }

    /// Max |f_i(x)| computed through the exact rational path.
    pub fn exact_max_residual(&self, x: &[f64]) -> f64 {
        self.polys
            .iter()
            .map(|p| p.evaluate(x).map(f64::abs).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Newton iteration (minimal-norm steps) onto the common zero set of an
/// underdetermined regular system: at most `n` equations whose Jacobian has
/// full numerical rank along the path.
///
/// Returns the refined point with its exactly-evaluated residual, a
/// rank-deficiency error when the Jacobian degenerates (the caller treats
/// this as a transversality-failure candidate), or non-convergence. A point
/// already on the zero set is returned unchanged with zero iterations.
pub fn newton_refine(
    sys: &PolySystem,
    p0: &[f64],
    tol: &Tolerances,
) -> Result<Refined, RefineError> {
    assert!(sys.len() <= sys.nvars(), "newton_refine expects #equations <= n");
    let exact0 = sys.exact_max_residual(p0);
    if exact0 <= tol.zero_tol {
        return Ok(Refined {
            point: p0.to_vec(),
            iterations: 0,
            residual: exact0,
        });
    }
    let mut x = p0.to_vec();
    let mut locality: Option<f64> = None;
    let mut last_rmax = f64::INFINITY;
    for iter in 1..=tol.newton_max_iter {
        let r = sys.residual_f64(&x);
        let rnorm = norm2(&r);
        if !rnorm.is_finite() {
            return Err(RefineError::NonConvergence {
                iterations: iter,
                residual: f64::INFINITY,
            });
        }
        // Accept only once the residual has both crossed the tolerance and
        // stopped improving geometrically; a steady 4x-per-step decay is the
        // signature of sliding into a tangency, where the rank test below
        // must get its chance to fire first.
        let rmax = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if rmax <= tol.zero_tol && (last_rmax / rmax.max(1e-300) <= 3.0 || rmax <= 1e-14) {
            let exact = sys.exact_max_residual(&x);
            if exact <= tol.zero_tol {
                return Ok(Refined {
                    point: x,
                    iterations: iter - 1,
                    residual: exact,
                });
            }
        }
        let j = sys.jacobian(&x);
        let svals = sorted_singular_values(&j);
        let smax = svals.first().cloned().unwrap_or(0.0);
        let smin = svals.last().cloned().unwrap_or(0.0);
        if smax < 1e-300 {
            return Err(RefineError::RankDeficient { ratio: 0.0 });
        }
        let ratio = smin / smax;
        if ratio < tol.rank_rel_tol {
            return Err(RefineError::RankDeficient { ratio });
        }
        let svd = j.svd(true, true);
        let rhs = nalgebra::DVector::from_vec(r.clone());
        let delta = svd
            .solve(&rhs, smax * 1e-14)
            .map_err(|_| RefineError::NonConvergence {
                iterations: iter,
                residual: rnorm,
            })?;
        let bound = *locality.get_or_insert(2.1 * delta.norm() + 1e-8);
        let mut alpha = 1.0;
        let mut candidate;
        loop {
            candidate = x
                .iter()
                .zip(delta.iter())
                .map(|(xi, di)| xi - alpha * di)
                .collect::<Vec<f64>>();
            let cnorm = norm2(&sys.residual_f64(&candidate));
            if cnorm < rnorm || alpha < 1e-3 {
                break;
            }
            alpha *= 0.5;
        }
        x = candidate;
        last_rmax = rmax;
        if dist2(&x, p0) > bound {
            return Err(RefineError::LeftLocality);
        }
    }
    let exact = sys.exact_max_residual(&x);
    if exact <= tol.zero_tol {
        return Ok(Refined {
            point: x,
            iterations: tol.newton_max_iter,
            residual: exact,
        });
    }
    Err(RefineError::NonConvergence {
        iterations: tol.newton_max_iter,
        residual: exact,
    })
}

/// Damped Gauss-Newton least squares for (possibly overdetermined,
/// possibly degenerate) polynomial systems, with optional pinned
/// coordinates. Singular values are truncated rather than rejected, so this
/// solver converges onto tangential configurations that `newton_refine`
/// reports as rank-deficient. Returns `None` when no point with exact
/// residuals below `zero_tol` is reached.
pub fn gauss_newton_ls(
    sys: &PolySystem,
    p0: &[f64],
    pinned: &[(usize, f64)],
    max_dist: Option<f64>,
    tol: &Tolerances,
) -> Option<Refined> {
    let _n = sys.nvars();
    let mut x = p0.to_vec();
    for &(i, v) in pinned {
        x[i] = v;
    }
    let start = x.clone();
    let budget = tol.newton_max_iter * 3;
    for iter in 0..=budget {
        let exact = sys.exact_max_residual(&x);
        if exact <= tol.zero_tol {
            return Some(Refined {
                point: x,
                iterations: iter,
                residual: exact,
            });
        }
        if iter == budget {
            break;
        }
        let r = sys.residual_f64(&x);
        let rnorm = norm2(&r);
        if !rnorm.is_finite() {
            return None;
        }
        let mut j = sys.jacobian(&x);
        for &(i, _) in pinned {
            for row in 0..j.nrows() {
                j[(row, i)] = 0.0;
            }
        }
        let svals = sorted_singular_values(&j);
        let smax = svals.first().cloned().unwrap_or(0.0);
        if smax < 1e-300 {
            return None;
        }
        let svd = j.svd(true, true);
        let rhs = nalgebra::DVector::from_vec(r.clone());
        let delta = svd.solve(&rhs, smax * 1e-10).ok()?;
        let mut step: Vec<f64> = delta.iter().cloned().collect();
        for &(i, _) in pinned {
            step[i] = 0.0;
        }
        if norm2(&step) < 1e-16 * (1.0 + norm2(&x)) {
            return None; // stalled at a nonzero local minimum
        }
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let candidate: Vec<f64> = x.iter().zip(&step).map(|(xi, di)| xi - alpha * di).collect();
            if norm2(&sys.residual_f64(&candidate)) < rnorm {
                x = candidate;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            return None;
        }
        if let Some(bound) = max_dist {
            if dist2(&x, &start) > bound {
                return None;
            }
        }
    }
    None
}

/// Deduplicates a point list: lexicographic sort, then greedy clustering at
/// the given radius. Deterministic.
pub fn dedup_points(mut points: Vec<Vec<f64>>, radius: f64) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let mut dup = false;
        for q in kept.iter().rev() {
            if q[0] < p[0] - radius {
                break; // sorted by first coordinate: nothing earlier can match
            }
            if dist2(&p, q) <= radius {
                dup = true;
                break;
            }
        }
        if !dup {
            kept.push(p);
        }
    }
    kept
}
