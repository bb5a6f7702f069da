//! Acceptance suite: golden reproductions of the worked two-cylinder and
//! two-sphere decompositions, the tangential negative control, the
//! two-block equivalence on a generated corpus, the classification
//! proposition, the manifold construction, the Reeb digraphs, and numerical
//! hygiene. One pass/fail line is printed per criterion.

use ra_region::decomposition::{
    assemble, check_prar, BlockCtx, BlockFamily, Checker, DecompositionInput, TheoremMode,
};
use ra_region::geometry::{build_frame, BoundingBox, Tolerances};
use ra_region::momentmap::{build_system, sample_fiber, MomentMapInput};
use ra_region::poly::{Polynomial, VarSet};
use ra_region::reeb::{reeb_digraph, validate_digraph, VertexKind};
use ra_region::region::{
    classify_boundary, critical_flag_normal, find_critical_pinned, singular_flag,
    CylinderSurface, NFlag, RegionSpec,
};
use ra_region::report::{Overall, Verdict};
use std::collections::BTreeMap;

fn tols() -> Tolerances {
    Tolerances::default()
}

fn surface(label: &str, text: &str, n: usize) -> CylinderSurface {
    CylinderSurface::new(label, Polynomial::parse(text, n).unwrap()).unwrap()
}

fn pass(criterion: usize, what: &str) {
    println!("criterion {}: PASS - {}", criterion, what);
}

/// The two-cylinder decomposition: circles in (x1,x2) and (x1,x3) over the
/// blocks {1,2} and {1,3}.
fn two_cylinder_input() -> DecompositionInput {
    let blocks = BlockFamily::new(
        3,
        vec!["A1".into(), "A2".into()],
        vec![VarSet::new([1, 2]), VarSet::new([1, 3])],
    )
    .unwrap();
    DecompositionInput::new(
        3,
        vec![
            surface("S1", "1-(x1-1/2)^2-x2^2", 3),
            surface("S2", "1-(x1+1/2)^2-x3^2", 3),
        ],
        blocks,
        vec![0, 1],
        vec![0.0, 0.0, 0.0],
        BTreeMap::new(),
        BoundingBox::centered(3, 2.0),
        tols(),
    )
    .unwrap()
}

/// The two-sphere decomposition in four variables over {1,2,3} and {1,2,4},
/// with the small radius bump r = 1/10 on the second sphere.
fn two_sphere_input() -> DecompositionInput {
    let blocks = BlockFamily::new(
        4,
        vec!["A1".into(), "A2".into()],
        vec![VarSet::new([1, 2, 3]), VarSet::new([1, 2, 4])],
    )
    .unwrap();
    DecompositionInput::new(
        4,
        vec![
            surface("S1", "1-(x1-1/2)^2-x2^2-x3^2", 4),
            surface("S2", "1+1/10-(x1+1/2)^2-x2^2-x4^2", 4),
        ],
        blocks,
        vec![0, 1],
        vec![0.0, 0.0, 0.0, 0.0],
        BTreeMap::new(),
        BoundingBox::centered(4, 2.0),
        tols(),
    )
    .unwrap()
}

fn tangential_input() -> DecompositionInput {
    let blocks = BlockFamily::new(
        3,
        vec!["A1".into(), "A2".into()],
        vec![VarSet::new([1, 2]), VarSet::new([1, 3])],
    )
    .unwrap();
    DecompositionInput::new(
        3,
        vec![
            surface("S1", "1-(x1-1/2)^2-x2^2", 3),
            surface("S2", "1-(x1-1/2)^2-x3^2", 3),
        ],
        blocks,
        vec![0, 1],
        vec![0.5, 0.0, 0.0],
        BTreeMap::new(),
        BoundingBox::centered(3, 2.0),
        tols(),
    )
    .unwrap()
}

fn block_ctxs(input: &DecompositionInput) -> Vec<BlockCtx> {
    let prar = check_prar(input);
    assert!(
        prar.verdicts.iter().all(|v| v.is_pass()),
        "structural conditions must pass: {:?}",
        prar.witnesses
    );
    prar.ctxs.into_iter().flatten().collect()
}

/// Dense angular parameterization of a circle: the extreme first-coordinate
/// values, independent of the solver path.
fn angular_sweep_extremes(cx: f64, r: f64) -> (f64, f64) {
    let steps = 1usize << 20;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..steps {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (steps as f64);
        let x = cx + r * theta.cos();
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

fn critical_x1_values(ctx: &BlockCtx) -> Vec<f64> {
    let crits = find_critical_pinned(&ctx.region, &ctx.enumeration, &VarSet::singleton(1), &[]);
    let mut values: Vec<f64> = crits.points.iter().map(|c| c.point[0]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-6);
    values
}

#[test]
fn criterion_1_two_cylinder_certification() {
    let input = two_cylinder_input();
    let report = assemble(&input, TheoremMode::Thm1, 1).unwrap();
    assert_eq!(
        report.overall,
        Some(Overall::CertifiedWithinBox),
        "{}",
        report
    );

    let ctxs = block_ctxs(&input);
    let expected = [
        angular_sweep_extremes(0.5, 1.0),  // block A1 circle
        angular_sweep_extremes(-0.5, 1.0), // block A2 circle
    ];
    for (ctx, (lo, hi)) in ctxs.iter().zip(expected) {
        let values = critical_x1_values(ctx);
        assert_eq!(values.len(), 2, "block {}: {:?}", ctx.label, values);
        assert!(
            (values[0] - lo).abs() <= 1e-6,
            "block {}: {} vs oracle {}",
            ctx.label,
            values[0],
            lo
        );
        assert!(
            (values[1] - hi).abs() <= 1e-6,
            "block {}: {} vs oracle {}",
            ctx.label,
            values[1],
            hi
        );
    }
    // The oracle agrees with the closed forms {-1/2, 3/2} and {-3/2, 1/2}.
    assert!((expected[0].0 + 0.5).abs() <= 1e-6 && (expected[0].1 - 1.5).abs() <= 1e-6);
    assert!((expected[1].0 + 1.5).abs() <= 1e-6 && (expected[1].1 - 0.5).abs() <= 1e-6);
    pass(1, "two-cylinder decomposition certified; critical values match the angular oracle");
}

#[test]
fn criterion_2_two_sphere_certification() {
    let input = two_sphere_input();
    let report = assemble(&input, TheoremMode::Thm3, 2).unwrap();
    assert_eq!(
        report.overall,
        Some(Overall::CertifiedWithinBox),
        "{}",
        report
    );

    // The detected {1,2}-singular sets are the circles x3 = 0 and x4 = 0.
    let ctxs = block_ctxs(&input);
    let n12 = VarSet::new([1, 2]);
    let circle_residuals = [
        |p: &[f64]| (1.0 - (p[0] - 0.5).powi(2) - p[1] * p[1]).abs(),
        |p: &[f64]| (1.1 - (p[0] + 0.5).powi(2) - p[1] * p[1]).abs(),
    ];
    for (ctx, residual) in ctxs.iter().zip(circle_residuals) {
        let crits = find_critical_pinned(&ctx.region, &ctx.enumeration, &n12, &[]);
        assert!(
            crits.points.len() >= 8,
            "block {}: expected many singular-circle samples",
            ctx.label
        );
        for c in &crits.points {
            assert!(
                c.point[2].abs() <= 1e-6,
                "block {}: last coordinate {}",
                ctx.label,
                c.point[2]
            );
            assert!(
                residual(&c.point) <= 1e-6,
                "block {}: point {:?} off the singular circle",
                ctx.label,
                c.point
            );
        }
    }
    pass(2, "two-sphere decomposition certified; singular sets lie on the expected circles");
}

#[test]
fn criterion_3_tangential_negative_control() {
    let input = tangential_input();
    let report = assemble(&input, TheoremMode::Thm1, 1).unwrap();
    assert_eq!(report.overall, Some(Overall::Refuted), "{}", report);
    let witness = report.witnesses.iter().find(|w| {
        w.diagnostic.contains("rank 1 < 2")
            && w.points.iter().any(|p| {
                ((p[0] + 0.5).powi(2) + p[1] * p[1] + p[2] * p[2]).sqrt() <= 1e-3
            })
    });
    assert!(
        witness.is_some(),
        "expected a rank-1 witness within 1e-3 of (-1/2, 0, 0): {}",
        report
    );
    pass(3, "tangential variant refuted with a rank-deficient witness at the contact point");
}

// ---------------------------------------------------------------------------
// Random two-block corpus
// ---------------------------------------------------------------------------

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 11
    }

    fn pick(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

/// A circle on the quarter-integer lattice inside the given coordinate pair.
fn lattice_circle(label: &str, vars: (usize, usize), cx4: i64, cy4: i64, r4: i64) -> CylinderSurface {
    let text = format!(
        "{}/16 - (x{} - {}/4)^2 - (x{} - {}/4)^2",
        r4 * r4,
        vars.0,
        cx4,
        vars.1,
        cy4
    );
    surface(label, &text, 3)
}

fn random_two_block_config(rng: &mut Lcg) -> Option<DecompositionInput> {
    let centers = [-4i64, -2, -1, 0, 1, 2, 4];
    let radii = [2i64, 3, 4, 5];
    let mut surfaces = Vec::new();
    let mut assignment = Vec::new();
    let n_block1 = 1 + usize::from(rng.pick(3) == 0);
    for k in 0..n_block1 {
        surfaces.push(lattice_circle(
            &format!("P{}", k + 1),
            (1, 2),
            centers[rng.pick(centers.len())],
            centers[rng.pick(centers.len())],
            radii[rng.pick(radii.len())],
        ));
        assignment.push(0);
    }
    surfaces.push(lattice_circle(
        "Q1",
        (1, 3),
        centers[rng.pick(centers.len())],
        centers[rng.pick(centers.len())],
        radii[rng.pick(radii.len())],
    ));
    assignment.push(1);

    // A seed with a positive margin on every surface, from a coarse scan.
    let mut seed = None;
    'outer: for ix in -7..=7 {
        for iy in -7..=7 {
            for iz in -7..=7 {
                let p = [ix as f64 / 4.0, iy as f64 / 4.0, iz as f64 / 4.0];
                if surfaces
                    .iter()
                    .all(|s| s.f.eval_f64(&p) > 0.05)
                {
                    seed = Some(vec![p[0], p[1], p[2]]);
                    break 'outer;
                }
            }
        }
    }
    let seed = seed?;
    let blocks = BlockFamily::new(
        3,
        vec!["A1".into(), "A2".into()],
        vec![VarSet::new([1, 2]), VarSet::new([1, 3])],
    )
    .unwrap();
    DecompositionInput::new(
        3,
        surfaces,
        blocks,
        assignment,
        seed,
        BTreeMap::new(),
        BoundingBox::centered(3, 2.5),
        tols(),
    )
    .ok()
}

#[test]
fn criterion_4_two_block_equivalence_on_random_corpus() {
    let mut rng = Lcg(0x5eed_cafe_f00d_0001);
    let mut compared = 0usize;
    let mut failures = 0usize;
    let mut mismatches = Vec::new();
    for trial in 0..600 {
        if compared >= 50 {
            break;
        }
        let Some(input) = random_two_block_config(&mut rng) else {
            continue;
        };
        let prar = check_prar(&input);
        if !prar.verdicts.iter().all(|v| v.is_pass()) {
            continue;
        }
        let ctxs: Vec<BlockCtx> = prar.ctxs.into_iter().flatten().collect();
        let mut checker = Checker::new(&input, &ctxs);
        let (v6, _) = checker.check_cond6();
        let (v7, _) = checker.check_cond7();
        let Some((v2, _)) = checker.check_thm2() else {
            continue;
        };
        let chain = v6.and(v7);
        if chain == Verdict::Indeterminate || v2 == Verdict::Indeterminate {
            continue;
        }
        compared += 1;
        if chain == Verdict::Fail {
            failures += 1;
        }
        if (chain == Verdict::Pass) != (v2 == Verdict::Pass) {
            mismatches.push((trial, chain, v2));
        }
    }
    assert!(compared >= 50, "only {} configurations compared", compared);
    assert!(
        mismatches.is_empty(),
        "equivalence mismatches: {:?}",
        mismatches
    );
    pass(
        4,
        &format!(
            "two-block equivalence agreed on {} configurations ({} failing)",
            compared, failures
        ),
    );
}

#[test]
fn criterion_5_proposition_suite() {
    // Classified boundary points across a small corpus of regions.
    let disk = RegionSpec::new(
        2,
        vec![surface("S1", "1-x1^2-x2^2", 2)],
        vec![0.0, 0.0],
        BoundingBox::centered(2, 2.0),
        tols(),
    )
    .unwrap();
    let annulus = RegionSpec::new(
        2,
        vec![
            surface("OUT", "1-x1^2-x2^2", 2),
            surface("IN", "x1^2+x2^2-1/4", 2),
        ],
        vec![0.7, 0.0],
        BoundingBox::centered(2, 2.0),
        tols(),
    )
    .unwrap();
    let crossing = RegionSpec::new(
        2,
        vec![
            surface("L", "1-(x1-1/2)^2-x2^2", 2),
            surface("R", "1-(x1+1/2)^2-x2^2", 2),
        ],
        vec![0.0, 0.0],
        BoundingBox::centered(2, 2.0),
        tols(),
    )
    .unwrap();
    let sphere = RegionSpec::new(
        3,
        vec![surface("S", "1-(x1-1/2)^2-x2^2-x3^2", 3)],
        vec![0.5, 0.0, 0.0],
        BoundingBox::centered(3, 2.0),
        tols(),
    )
    .unwrap();

    let mut agreement_checks = 0usize;
    let mut nested_checks = 0usize;
    for spec in [&disk, &annulus, &crossing, &sphere] {
        let n = spec.nvars;
        let mut sets: Vec<VarSet> = (1..=n).map(VarSet::singleton).collect();
        for a in 1..=n {
            for b in (a + 1)..=n {
                sets.push(VarSet::new([a, b]));
            }
        }
        if n >= 3 {
            sets.push(VarSet::full(n));
        }
        let enumeration = classify_boundary(spec, &sets).unwrap();
        assert!(enumeration.records.len() > 50);
        for r in &enumeration.records {
            // Singular equals critical on normal points, for one-element
            // sets, via two independent code paths.
            if r.is_normal {
                for k in 1..=n {
                    let n1 = VarSet::singleton(k);
                    let a = singular_flag(&r.frame, &n1, &spec.tol);
                    let b = critical_flag_normal(&r.frame, &n1, &spec.tol);
                    assert_eq!(a, b, "routes disagree at {:?} for {}", r.point, n1);
                    agreement_checks += 1;
                }
            }
            // Nested implication: an N-point for the larger set is an
            // N-point for every smaller one.
            for big in &sets {
                for small in &sets {
                    if small.is_subset(big) && small != big {
                        if r.flags[big] == NFlag::NPoint {
                            assert_eq!(
                                r.flags[small],
                                NFlag::NPoint,
                                "nested implication fails at {:?}: {} inside {}",
                                r.point,
                                small,
                                big
                            );
                            nested_checks += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(agreement_checks > 500);
    assert!(nested_checks > 500);
    pass(
        5,
        &format!(
            "singular/critical agreement on {} checks, nested implication on {}",
            agreement_checks, nested_checks
        ),
    );
}

#[test]
fn criterion_6_moment_map_construction() {
    let input = two_cylinder_input();
    let region = input.ambient_region().unwrap();
    let minput = MomentMapInput::new(region.clone(), vec![1, 2], vec![0, 0]).unwrap();
    let system = build_system(&minput).unwrap();

    // 100 interior points: a deterministic lattice inside the region.
    let mut bases = Vec::new();
    'scan: for ix in -20..=20 {
        for iy in -20..=20 {
            for iz in -20..=20 {
                let p = [ix as f64 / 16.0, iy as f64 / 16.0, iz as f64 / 16.0];
                if region.surfaces.iter().all(|s| s.f.eval_f64(&p) > 1e-3) {
                    bases.push(p.to_vec());
                    if bases.len() >= 100 {
                        break 'scan;
                    }
                }
            }
        }
    }
    assert_eq!(bases.len(), 100);
    let mut jacobian_checks = 0usize;
    for base in &bases {
        let fiber = sample_fiber(&system, &minput, base, &tols()).unwrap();
        assert_eq!(fiber.len(), 4, "interior fiber must have 2^2 points");
        for p in &fiber {
            let residual = system.max_residual(p).unwrap();
            assert!(residual <= 1e-10, "residual {}", residual);
            assert_eq!(&p[..3], &base[..]);
            if p[3].abs() * p[4].abs() > 1e-9 {
                // Jacobian of the two equations at the sampled point.
                let grads: Vec<Vec<f64>> = system
                    .equations
                    .iter()
                    .map(|eq| {
                        eq.gradient()
                            .iter()
                            .map(|g| g.evaluate(p).unwrap())
                            .collect()
                    })
                    .collect();
                let frame = build_frame(p.clone(), vec![0, 1], grads, &tols());
                assert_eq!(frame.numerical_rank, 2, "Jacobian rank at {:?}", p);
                assert!(!frame.rank_indeterminate);
                jacobian_checks += 1;
            }
        }
    }
    assert!(jacobian_checks >= 300);
    pass(
        6,
        &format!(
            "manifold fibers exact over 100 interior points; {} full-rank Jacobian checks",
            jacobian_checks
        ),
    );
}

#[test]
fn criterion_7_reeb_digraphs() {
    // Disk: one edge from birth at -1 to death at +1.
    let disk = RegionSpec::new(
        2,
        vec![surface("S1", "1-x1^2-x2^2", 2)],
        vec![0.0, 0.0],
        BoundingBox::centered(2, 2.0),
        tols(),
    )
    .unwrap();
    let g = reeb_digraph(&disk, 1).unwrap();
    validate_digraph(&g).unwrap();
    assert_eq!((g.vertices.len(), g.edges.len()), (2, 1));

    // Two-cylinder region, first coordinate: a single edge with endpoint
    // values -1/2 and 1/2.
    let region = two_cylinder_input().ambient_region().unwrap();
    let g = reeb_digraph(&region, 1).unwrap();
    validate_digraph(&g).unwrap();
    assert_eq!((g.vertices.len(), g.edges.len()), (2, 1));
    let mut vals: Vec<f64> = g.vertices.iter().map(|v| v.value).collect();
    vals.sort_by(f64::total_cmp);
    assert!((vals[0] + 0.5).abs() <= 1e-4, "birth at {}", vals[0]);
    assert!((vals[1] - 0.5).abs() <= 1e-4, "death at {}", vals[1]);

    // Annulus: birth, split, merge, death with four edges.
    let annulus = RegionSpec::new(
        2,
        vec![
            surface("OUT", "1-x1^2-x2^2", 2),
            surface("IN", "x1^2+x2^2-1/4", 2),
        ],
        vec![0.7, 0.0],
        BoundingBox::centered(2, 2.0),
        tols(),
    )
    .unwrap();
    let g = reeb_digraph(&annulus, 1).unwrap();
    validate_digraph(&g).unwrap();
    assert_eq!((g.vertices.len(), g.edges.len()), (4, 4));
    assert_eq!(g.count_kind(VertexKind::Split), 1);
    assert_eq!(g.count_kind(VertexKind::Merge), 1);
    pass(7, "disk, two-cylinder and annulus digraphs have the expected shapes and orientations");
}

#[test]
fn criterion_8_numerical_hygiene() {
    // Gradient versus central differences on 100 random polynomials and
    // points.
    let mut rng = Lcg(0xfeed_beef_0000_0001);
    let mut checked = 0usize;
    while checked < 100 {
        let n = 1 + rng.pick(4);
        let mut poly = Polynomial::zero(n);
        let terms = 1 + rng.pick(6);
        for _ in 0..terms {
            let exps: Vec<u32> = (0..n).map(|_| rng.pick(4) as u32).collect();
            let num = rng.pick(19) as i64 - 9;
            let den = 1 + rng.pick(6) as i64;
            let mono = exps.iter().enumerate().fold(
                Polynomial::constant(
                    n,
                    ra_region::Rational::new(num.into(), den.into()),
                ),
                |acc, (i, &e)| {
                    let v = Polynomial::variable(n, i + 1).unwrap();
                    acc.mul(&v.pow(e))
                },
            );
            poly = poly.add(&mono);
        }
        if poly.is_zero() {
            continue;
        }
        let point: Vec<f64> = (0..n)
            .map(|_| (rng.pick(4001) as f64 / 1000.0) - 2.0)
            .collect();
        let grad = poly.gradient();
        let h = 1e-6;
        for i in 0..n {
            let mut hi = point.clone();
            let mut lo = point.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (poly.evaluate(&hi).unwrap() - poly.evaluate(&lo).unwrap()) / (2.0 * h);
            let an = grad[i].evaluate(&point).unwrap();
            let scale = an.abs().max(1.0);
            assert!(
                (fd - an).abs() / scale < 1e-6,
                "finite differences disagree: {} vs {}",
                fd,
                an
            );
        }
        checked += 1;
    }

    // Verdicts invariant under positive rescaling of any surface.
    let base = two_cylinder_input();
    let base_report = assemble(&base, TheoremMode::Thm1, 1).unwrap();
    let mut scaled = base.clone();
    scaled.surfaces[0] = CylinderSurface::new(
        "S1",
        scaled.surfaces[0]
            .f
            .scale(&ra_region::Rational::new(3.into(), 1.into())),
    )
    .unwrap();
    scaled.surfaces[1] = CylinderSurface::new(
        "S2",
        scaled.surfaces[1]
            .f
            .scale(&ra_region::Rational::new(7.into(), 2.into())),
    )
    .unwrap();
    let scaled_report = assemble(&scaled, TheoremMode::Thm1, 1).unwrap();
    assert_eq!(base_report.conditions, scaled_report.conditions);
    assert_eq!(base_report.overall, scaled_report.overall);

    let tang = tangential_input();
    let tang_report = assemble(&tang, TheoremMode::Thm1, 1).unwrap();
    let mut tang_scaled = tang.clone();
    tang_scaled.surfaces[1] = CylinderSurface::new(
        "S2",
        tang_scaled.surfaces[1]
            .f
            .scale(&ra_region::Rational::new(5.into(), 3.into())),
    )
    .unwrap();
    let tang_scaled_report = assemble(&tang_scaled, TheoremMode::Thm1, 1).unwrap();
    assert_eq!(tang_report.overall, tang_scaled_report.overall);

    // Verdicts invariant under block and surface permutation; witness point
    // sets agree up to ordering.
    let permuted = {
        let blocks = BlockFamily::new(
            3,
            vec!["A2".into(), "A1".into()],
            vec![VarSet::new([1, 3]), VarSet::new([1, 2])],
        )
        .unwrap();
        DecompositionInput::new(
            3,
            vec![
                surface("S2", "1-(x1-1/2)^2-x3^2", 3),
                surface("S1", "1-(x1-1/2)^2-x2^2", 3),
            ],
            blocks,
            vec![0, 1],
            vec![0.5, 0.0, 0.0],
            BTreeMap::new(),
            BoundingBox::centered(3, 2.0),
            tols(),
        )
        .unwrap()
    };
    let permuted_report = assemble(&permuted, TheoremMode::Thm1, 1).unwrap();
    assert_eq!(tang_report.overall, permuted_report.overall);
    let witness_points = |report: &ra_region::ConditionReport| {
        let mut pts: Vec<(String, Vec<i64>)> = report
            .witnesses
            .iter()
            .flat_map(|w| {
                w.points.iter().map(move |p| {
                    (
                        w.condition.clone(),
                        p.iter().map(|x| (x * 1e6).round() as i64).collect(),
                    )
                })
            })
            .collect();
        pts.sort();
        pts.dedup();
        pts
    };
    assert_eq!(
        witness_points(&tang_report),
        witness_points(&permuted_report),
        "witness sets differ under permutation"
    );
    pass(8, "finite-difference, rescaling and permutation invariances all hold");
}
