//! Builds the real algebraic manifold over the closure of a region — one
//! equation per surface class, product of the class's polynomials minus a
//! sum of squares of fresh variables — together with the distinguished
//! projection back onto the region coordinates. Validates the class map
//! (intersecting surfaces must land in different classes) and samples
//! fibers deterministically.

use crate::geometry::Tolerances;
use crate::poly::{PolyError, Polynomial, Rational, VarSet};
use crate::region::{enumerate_boundary, slice_stratum_points, RegionError, RegionSpec};
use crate::report::{Verdict, Witness};
use num_traits::{Signed, ToPrimitive};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum MomentError {
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("class map must assign every surface a class in 1..={classes}")]
    ClassOutOfRange { classes: usize },
    #[error("class map is not surjective: class {missing} has no surface")]
    NotSurjective { missing: usize },
    #[error("point lies outside the closure of the region: class {class} product = {value:.3e}")]
    OutsideClosure { class: usize, value: f64 },
    #[error("point does not satisfy the system: residual {residual:.3e} on equation {equation}")]
    ResidualTooLarge { equation: usize, residual: f64 },
    #[error("export is malformed at line {line}: {msg}")]
    Export { line: usize, msg: String },
}

/// A region together with a surface-to-class surjection and one sphere
/// dimension per class.
#[derive(Debug, Clone)]
pub struct MomentMapInput {
    pub region: RegionSpec,
    /// 1-based class per surface, onto `1..=classes()`.
    pub ls: Vec<usize>,
    /// Sphere dimension d_i per class; class i contributes d_i + 1 fresh
    /// variables.
    pub d: Vec<u32>,
}

impl MomentMapInput {
    pub fn new(region: RegionSpec, ls: Vec<usize>, d: Vec<u32>) -> Result<Self, MomentError> {
        let classes = d.len();
        if ls.len() != region.surfaces.len()
            || classes == 0
            || ls.iter().any(|&c| c == 0 || c > classes)
        {
            return Err(MomentError::ClassOutOfRange { classes });
        }
        for c in 1..=classes {
            if !ls.contains(&c) {
                return Err(MomentError::NotSurjective { missing: c });
            }
        }
        Ok(MomentMapInput { region, ls, d })
    }

    pub fn classes(&self) -> usize {
        self.d.len()
    }
}

/// Numerically searches for pairwise surface intersections inside the
/// sampled closure of the region; fails when an intersecting pair shares a
/// class. Restricted to the box, like every other check.
pub fn validate_ls(input: &MomentMapInput) -> Result<(Verdict, Vec<Witness>), MomentError> {
    let region = &input.region;
    let enumeration = enumerate_boundary(region)?;
    let mut verdict = Verdict::Pass;
    let mut witnesses = Vec::new();
    for i in 0..region.surfaces.len() {
        for j in (i + 1)..region.surfaces.len() {
            if input.ls[i] != input.ls[j] {
                continue;
            }
            let mut hits: Vec<Vec<f64>> = enumeration
                .records
                .iter()
                .filter(|r| r.active.contains(&i) && r.active.contains(&j))
                .map(|r| r.point.clone())
                .collect();
            if hits.is_empty() {
                hits = slice_stratum_points(region, &enumeration, &[i, j], &[]);
            }
            if !hits.is_empty() {
                verdict = Verdict::Fail;
                witnesses.push(Witness {
                    condition: "class-map".into(),
                    block: None,
                    points: vec![hits[0].clone()],
                    diagnostic: format!(
                        "surfaces {} and {} intersect inside the closure but share class {}",
                        region.surfaces[i].label, region.surfaces[j].label, input.ls[i]
                    ),
                });
            }
        }
    }
    Ok((verdict, witnesses))
}

/// The polynomial system cutting out the manifold, in
/// `n + sum(d_i + 1)` variables: region coordinates first, then the fresh
/// variables of class 1, class 2, and so on.
#[derive(Debug, Clone)]
pub struct MomentMapSystem {
    pub region_vars: usize,
    pub total_vars: usize,
    pub equations: Vec<Polynomial>,
    /// Per class: 1-based index of its first fresh variable and the count
    /// (d_i + 1).
    pub y_blocks: Vec<(usize, usize)>,
}

pub fn build_system(input: &MomentMapInput) -> Result<MomentMapSystem, MomentError> {
    let n = input.region.nvars;
    let total: usize = n + input.d.iter().map(|&d| d as usize + 1).sum::<usize>();
    let embed = VarSet::new(1..=n);
    let mut equations = Vec::new();
    let mut y_blocks = Vec::new();
    let mut next = n + 1;
    for (class0, &di) in input.d.iter().enumerate() {
        let class = class0 + 1;
        let mut prod = Polynomial::constant(n, Rational::from_integer(1.into()));
        for (j, s) in input.region.surfaces.iter().enumerate() {
            if input.ls[j] == class {
                prod = prod.mul(&s.f);
            }
        }
        let mut eq = prod.unrelabel(&embed, total)?;
        let count = di as usize + 1;
        for k in 0..count {
            let y = Polynomial::variable(total, next + k)?;
            eq = eq.sub(&y.mul(&y));
        }
        equations.push(eq);
        y_blocks.push((next, count));
        next += count;
    }
    Ok(MomentMapSystem {
        region_vars: n,
        total_vars: total,
        equations,
        y_blocks,
    })
}

impl MomentMapSystem {
    /// Exact value of the class product at a region point (the squared
    /// fiber radius of that class).
    pub fn class_product(&self, class0: usize, x: &[f64]) -> Result<Rational, MomentError> {
        let mut full = x.to_vec();
        full.resize(self.total_vars, 0.0);
        Ok(self.equations[class0].evaluate_rational_of_floats(&full)?)
    }

    /// Max absolute residual of the system at a full point, exact path.
    pub fn max_residual(&self, point: &[f64]) -> Result<f64, MomentError> {
        let mut worst = 0.0f64;
        for eq in &self.equations {
            let v = eq.evaluate(point)?;
            worst = worst.max(v.abs());
        }
        Ok(worst)
    }

    /// One polynomial per line in the shared grammar, preceded by a header
    /// naming the total variable count. Round-trippable via `parse_export`.
    pub fn export(&self) -> String {
        let mut out = format!("vars: {}\n", self.total_vars);
        for eq in &self.equations {
            out.push_str(&eq.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse_export(text: &str) -> Result<(usize, Vec<Polynomial>), MomentError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(MomentError::Export {
            line: 1,
            msg: "empty export".into(),
        })?;
        let vars: usize = header
            .strip_prefix("vars:")
            .and_then(|s| s.trim().parse().ok())
            .ok_or(MomentError::Export {
                line: 1,
                msg: "expected 'vars: <count>'".into(),
            })?;
        let mut polys = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let p = Polynomial::parse(line, vars).map_err(|e| MomentError::Export {
                line: idx + 1,
                msg: e.to_string(),
            })?;
            polys.push(p);
        }
        Ok((vars, polys))
    }
}

pub const FIBER_POINTS_PER_DIM: usize = 8;

/// Deterministic, evenly spread points on the d-sphere of radius r
/// (d + 1 coordinates each). d = 0 gives {r, -r}; higher dimensions use a
/// Kronecker angle sequence, 8 points per dimension.
fn sphere_points(d: u32, r: f64, per_dim: usize) -> Vec<Vec<f64>> {
    if r == 0.0 {
        return vec![vec![0.0; d as usize + 1]];
    }
    match d {
        0 => vec![vec![r], vec![-r]],
        _ => {
            let count = per_dim * d as usize;
            let gamma = 1.324_717_957_244_746f64; // plastic constant
            let alphas: Vec<f64> = (1..=d).map(|j| 1.0 / gamma.powi(j as i32)).collect();
            (0..count)
                .map(|k| {
                    let mut angles: Vec<f64> = alphas
                        .iter()
                        .map(|a| ((k as f64 + 0.5) * a).fract())
                        .collect();
                    for (i, t) in angles.iter_mut().enumerate() {
                        if i + 1 < d as usize {
                            *t *= std::f64::consts::PI;
                        } else {
                            *t *= 2.0 * std::f64::consts::PI;
                        }
                    }
                    let mut p = Vec::with_capacity(d as usize + 1);
                    let mut sin_prod = 1.0;
                    for &t in &angles {
                        p.push(r * sin_prod * t.cos());
                        sin_prod *= t.sin();
                    }
                    p.push(r * sin_prod);
                    p
                })
                .collect()
        }
    }
}

/// Samples the fiber over a region point: per class, points on the sphere of
/// squared radius equal to the class product, combined across classes.
/// Every returned full point satisfies the system to within 1e-10.
pub fn sample_fiber(
    system: &MomentMapSystem,
    input: &MomentMapInput,
    x: &[f64],
    tol: &Tolerances,
) -> Result<Vec<Vec<f64>>, MomentError> {
    assert_eq!(x.len(), system.region_vars);
    let mut per_class: Vec<Vec<Vec<f64>>> = Vec::new();
    for class0 in 0..input.classes() {
        let prod = system.class_product(class0, x)?;
        let prod_f = prod.to_f64().unwrap_or(f64::NAN);
        if prod.is_negative() && prod_f < -tol.zero_tol {
            return Err(MomentError::OutsideClosure {
                class: class0 + 1,
                value: prod_f,
            });
        }
        let r2 = prod_f.max(0.0);
        let r = if r2 <= tol.zero_tol { 0.0 } else { r2.sqrt() };
        per_class.push(sphere_points(input.d[class0], r, FIBER_POINTS_PER_DIM));
    }
    let mut fibers: Vec<Vec<f64>> = vec![Vec::new()];
    for class_pts in &per_class {
        let mut next = Vec::with_capacity(fibers.len() * class_pts.len());
        for prefix in &fibers {
            for pt in class_pts {
                let mut combined = prefix.clone();
                combined.extend_from_slice(pt);
                next.push(combined);
            }
        }
        fibers = next;
    }
    let mut out = Vec::with_capacity(fibers.len());
    for ys in fibers {
        let mut full = x.to_vec();
        full.extend_from_slice(&ys);
        let residual = system.max_residual(&full)?;
        if residual > 1e-10 {
            return Err(MomentError::ResidualTooLarge {
                equation: 0,
                residual,
            });
        }
        out.push(full);
    }
    Ok(out)
}

/// The distinguished projection: the first region-variable coordinates of a
/// point that satisfies the system within `zero_tol`.
pub fn project(
    system: &MomentMapSystem,
    point: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>, MomentError> {
    for (i, eq) in system.equations.iter().enumerate() {
        let v = eq.evaluate(point)?;
        if v.abs() > tol.zero_tol {
            return Err(MomentError::ResidualTooLarge {
                equation: i + 1,
                residual: v.abs(),
            });
        }
    }
    Ok(point[..system.region_vars].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::region::CylinderSurface;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    fn pair_region() -> RegionSpec {
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

    fn annulus_region() -> RegionSpec {
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

    #[test]
    fn class_map_validation() {
        let region = pair_region();
        assert!(MomentMapInput::new(region.clone(), vec![1, 2], vec![0, 0]).is_ok());
        assert!(matches!(
            MomentMapInput::new(region.clone(), vec![1, 1], vec![0, 0]),
            Err(MomentError::NotSurjective { missing: 2 })
        ));
        assert!(MomentMapInput::new(region, vec![1, 3], vec![0, 0]).is_err());
    }

    #[test]
    fn distinct_classes_pass_when_surfaces_intersect() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let (v, w) = validate_ls(&input).unwrap();
        assert_eq!(v, Verdict::Pass, "{:?}", w);
    }

    #[test]
    fn shared_class_fails_on_intersecting_surfaces() {
        let input = MomentMapInput::new(pair_region(), vec![1, 1], vec![0]).unwrap();
        let (v, w) = validate_ls(&input).unwrap();
        assert_eq!(v, Verdict::Fail);
        assert!(!w.is_empty());
    }

    #[test]
    fn disjoint_surfaces_may_share_a_class() {
        // Annulus: the inner and outer circles never meet.
        let input = MomentMapInput::new(annulus_region(), vec![1, 1], vec![0]).unwrap();
        let (v, _) = validate_ls(&input).unwrap();
        assert_eq!(v, Verdict::Pass);
    }

    #[test]
    fn build_system_instantiates_the_formula() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let sys = build_system(&input).unwrap();
        assert_eq!(sys.total_vars, 5);
        assert_eq!(sys.equations.len(), 2);
        let e1 = Polynomial::parse("1-(x1-1/2)^2-x2^2-x4^2", 5).unwrap();
        let e2 = Polynomial::parse("1-(x1+1/2)^2-x3^2-x5^2", 5).unwrap();
        assert_eq!(sys.equations[0], e1);
        assert_eq!(sys.equations[1], e2);
        assert_eq!(sys.y_blocks, vec![(4, 1), (5, 1)]);
    }

    #[test]
    fn single_surface_higher_sphere() {
        let region = RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("S1", Polynomial::parse("1-x1^2-x2^2", 2).unwrap()).unwrap(),
            ],
            vec![0.0, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap();
        let input = MomentMapInput::new(region, vec![1], vec![1]).unwrap();
        let sys = build_system(&input).unwrap();
        assert_eq!(sys.total_vars, 4);
        let expect = Polynomial::parse("1-x1^2-x2^2-x3^2-x4^2", 4).unwrap();
        assert_eq!(sys.equations[0], expect);
    }

    #[test]
    fn fiber_over_the_origin_has_four_points() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let sys = build_system(&input).unwrap();
        let fiber = sample_fiber(&sys, &input, &[0.0, 0.0, 0.0], &tols()).unwrap();
        assert_eq!(fiber.len(), 4);
        let r = (0.75f64).sqrt();
        for p in &fiber {
            assert!(sys.max_residual(p).unwrap() <= 1e-10);
            assert!((p[3].abs() - r).abs() <= 1e-12);
            assert!((p[4].abs() - r).abs() <= 1e-12);
            assert_eq!(project(&sys, p, &tols()).unwrap(), vec![0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn fiber_collapses_on_the_surface() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let sys = build_system(&input).unwrap();
        // (0, sqrt(3)/2, 0) lies on the first cylinder and inside the
        // closure of the region: y1 = 0 forced, the fiber collapses there.
        let x = [0.0, (0.75f64).sqrt(), 0.0];
        let fiber = sample_fiber(&sys, &input, &x, &tols()).unwrap();
        assert_eq!(fiber.len(), 2);
        for p in &fiber {
            assert_eq!(p[3], 0.0);
            assert!(p[4].abs() > 0.5);
        }
    }

    #[test]
    fn outside_points_are_rejected() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let sys = build_system(&input).unwrap();
        assert!(matches!(
            sample_fiber(&sys, &input, &[1.9, 0.0, 0.0], &tols()),
            Err(MomentError::OutsideClosure { .. })
        ));
    }

    #[test]
    fn circle_fibers_lie_on_the_sphere() {
        let region = RegionSpec::new(
            2,
            vec![
                CylinderSurface::new("S1", Polynomial::parse("1-x1^2-x2^2", 2).unwrap()).unwrap(),
            ],
            vec![0.0, 0.0],
            BoundingBox::centered(2, 2.0),
            tols(),
        )
        .unwrap();
        let input = MomentMapInput::new(region, vec![1], vec![1]).unwrap();
        let sys = build_system(&input).unwrap();
        let fiber = sample_fiber(&sys, &input, &[0.25, -0.3], &tols()).unwrap();
        assert_eq!(fiber.len(), FIBER_POINTS_PER_DIM);
        for p in &fiber {
            assert!(sys.max_residual(p).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn export_round_trips() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let sys = build_system(&input).unwrap();
        let text = sys.export();
        assert!(text.starts_with("vars: 5\n"));
        let (vars, polys) = MomentMapSystem::parse_export(&text).unwrap();
        assert_eq!(vars, 5);
        assert_eq!(polys, sys.equations);
    }

    #[test]
    fn project_rejects_off_manifold_points() {
        let input = MomentMapInput::new(pair_region(), vec![1, 2], vec![0, 0]).unwrap();
        let sys = build_system(&input).unwrap();
        let bad = vec![0.0, 0.0, 0.0, 1.0, 1.0];
        assert!(matches!(
            project(&sys, &bad, &tols()),
            Err(MomentError::ResidualTooLarge { .. })
        ));
    }
}
