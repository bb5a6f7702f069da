//! Command-line verifier: problem-file ingestion, command dispatch, report
//! and plot-data emission.
//!
//! Exit codes: 0 certified / success, 1 refuted, 2 indeterminate,
//! 3 input error.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ra_region::decomposition::TheoremMode;
use ra_region::momentmap;
use ra_region::poly::VarSet;
use ra_region::problem::{parse_problem, ProblemFile};
use ra_region::reeb;
use ra_region::region::{self, BoundaryPointRecord, NFlag};
use ra_region::report::{fmt_sig, ConditionReport};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ra-region",
    about = "Verification toolkit for regions bounded by cylinders of real algebraic hypersurfaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Problem file.
    file: PathBuf,
    /// Residual below which a point counts as on a zero set.
    #[arg(long)]
    tol_zero: Option<f64>,
    /// Relative singular-value threshold for rank decisions.
    #[arg(long)]
    tol_rank: Option<f64>,
    /// Grid samples per axis.
    #[arg(long)]
    grid_res: Option<usize>,
    /// Output directory for emitted files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write boundary point dumps.
    #[arg(long)]
    emit_points: bool,
    /// Write directed-graph text exports.
    #[arg(long)]
    emit_dot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the two defining conditions of a region within the box.
    CheckRegion(CommonOpts),
    /// Verify the block-decomposition hypotheses and assemble the verdict.
    CheckDecomposition {
        #[command(flatten)]
        common: CommonOpts,
        /// Theorem mode (overrides the problem file).
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TheoremMode>,
        /// Intersection bound (overrides the problem file).
        #[arg(long)]
        b: Option<usize>,
    },
    /// Build the manifold system and sample fibers.
    MomentMap(CommonOpts),
    /// Extract the Reeb digraph of a coordinate projection.
    Reeb {
        #[command(flatten)]
        common: CommonOpts,
        /// Sweep coordinate (overrides the problem file).
        #[arg(long)]
        coord: Option<usize>,
    },
    /// Classify sampled boundary points against coordinate sets.
    Classify {
        #[command(flatten)]
        common: CommonOpts,
        /// Coordinate set, e.g. --nset 1 or --nset 1,2 (repeatable).
        #[arg(long = "nset")]
        nsets: Vec<String>,
    },
}

fn parse_mode(s: &str) -> Result<TheoremMode, String> {
    match s {
        "thm1" => Ok(TheoremMode::Thm1),
        "thm3" => Ok(TheoremMode::Thm3),
        other => Err(format!("unknown mode '{}' (expected thm1 or thm3)", other)),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("RA_REGION_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(3)
        }
    }
}

fn load(common: &CommonOpts) -> anyhow::Result<ProblemFile> {
    let text = std::fs::read_to_string(&common.file)
        .with_context(|| format!("reading {}", common.file.display()))?;
    let mut pf = parse_problem(&text)?;
    if let Some(z) = common.tol_zero {
        pf.tol.zero_tol = z;
    }
    if let Some(r) = common.tol_rank {
        pf.tol.rank_rel_tol = r;
    }
    if let Some(g) = common.grid_res {
        pf.tol.grid_res = g;
    }
    Ok(pf)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn flag_label(flag: NFlag) -> &'static str {
    match flag {
        NFlag::NPoint => "n-point",
        NFlag::Singular => "singular",
        NFlag::NotApplicable => "not-applicable",
        NFlag::Indeterminate => "indeterminate",
    }
}

fn dump_records(spec: &ra_region::region::RegionSpec, records: &[BoundaryPointRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let coords: Vec<String> = r.point.iter().map(|&x| fmt_sig(x)).collect();
        let active: Vec<String> = r
            .active
            .iter()
            .map(|&j| spec.surfaces[j].label.clone())
            .collect();
        out.push_str(&coords.join(" "));
        out.push_str(&format!(
            " | active={} | normal={}",
            active.join("+"),
            r.is_normal
        ));
        for (n, flag) in &r.flags {
            out.push_str(&format!(" | N{}={}", n, flag_label(*flag)));
        }
        out.push('\n');
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::CheckRegion(common) => {
            let pf = load(&common)?;
            let spec = pf.region_spec()?;
            let out = region::check_definition1(&spec)?;
            print!("{}", out.report);
            if common.emit_points {
                let path = write_out(
                    &common.out,
                    "boundary_points.txt",
                    &dump_records(&spec, &out.enumeration.records),
                )?;
                println!("emitted {}", path.display());
            }
            Ok(out.report.exit_code() as u8)
        }
        Command::CheckDecomposition { common, mode, b } => {
            let pf = load(&common)?;
            let input = pf.decomposition_input()?;
            let mode = mode
                .or(pf.mode)
                .context("no mode given (problem file 'mode' or --mode)")?;
            let b = b.or(pf.b).context("no b given (problem file 'b' or --b)")?;
            let report = ra_region::decomposition::assemble(&input, mode, b)?;
            print!("{}", report);
            Ok(report.exit_code() as u8)
        }
        Command::MomentMap(common) => {
            let pf = load(&common)?;
            let input = pf.moment_input()?;
            let (verdict, witnesses) = momentmap::validate_ls(&input)?;
            if !verdict.is_pass() {
                let mut report = ConditionReport::new("moment-map");
                report.push("class-map", verdict);
                report.witnesses = witnesses;
                report.finalize();
                print!("{}", report);
                // A class map that merges intersecting surfaces is invalid
                // input for the construction.
                return Ok(3);
            }
            let system = momentmap::build_system(&input)?;
            let path = write_out(&common.out, "moment_system.txt", &system.export())?;
            println!("report moment-map");
            println!("condition class-map pass");
            println!("vars {}", system.total_vars);
            println!("equations {}", system.equations.len());
            println!("emitted {}", path.display());

            // Fiber samples over a deterministic spread of interior points.
            let enumeration = region::enumerate_boundary(&input.region)?;
            let mut bases: Vec<Vec<f64>> = Vec::new();
            if let Some(seed_label) = enumeration.seed_component {
                let grid = &enumeration.sampled.grid;
                let members: Vec<usize> = (0..grid.len())
                    .filter(|&f| enumeration.sampled.label[f] == seed_label)
                    .collect();
                let stride = members.len().div_ceil(16).max(1);
                bases.extend(members.iter().step_by(stride).map(|&f| grid.node_point(f)));
            }
            let mut dump = String::new();
            let mut sampled = 0usize;
            for base in &bases {
                match momentmap::sample_fiber(&system, &input, base, &input.region.tol) {
                    Ok(fiber) => {
                        let coords: Vec<String> = base.iter().map(|&x| fmt_sig(x)).collect();
                        dump.push_str(&format!("base {}\n", coords.join(" ")));
                        for p in fiber {
                            let full: Vec<String> = p.iter().map(|&x| fmt_sig(x)).collect();
                            dump.push_str(&format!("fiber {}\n", full.join(" ")));
                        }
                        sampled += 1;
                    }
                    Err(momentmap::MomentError::OutsideClosure { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let path = write_out(&common.out, "fiber_samples.txt", &dump)?;
            println!("fiber-bases {}", sampled);
            println!("emitted {}", path.display());
            Ok(0)
        }
        Command::Reeb { common, coord } => {
            let pf = load(&common)?;
            let coord = coord
                .or(pf.reeb_coord)
                .context("no sweep coordinate (problem file 'reeb coord' or --coord)")?;
            let spec = pf.region_spec()?;
            let graph = reeb::reeb_digraph(&spec, coord)?;
            reeb::validate_digraph(&graph).map_err(|e| anyhow::anyhow!(e))?;
            println!("report reeb");
            println!("coord {}", coord);
            println!("vertices {}", graph.vertices.len());
            println!("edges {}", graph.edges.len());
            for (i, v) in graph.vertices.iter().enumerate() {
                println!(
                    "vertex v{} kind={} value={}",
                    i,
                    v.kind.label(),
                    fmt_sig(v.value)
                );
            }
            for e in &graph.edges {
                println!("edge v{} -> v{}", e.from, e.to);
            }
            for w in &graph.warnings {
                println!("warning {}", w);
            }
            if common.emit_dot {
                let path = write_out(&common.out, "reeb.dot", &reeb::export_dot(&graph))?;
                println!("emitted {}", path.display());
            }
            let indeterminate = graph.warnings.iter().any(|w| w.contains("indeterminate"));
            Ok(if indeterminate { 2 } else { 0 })
        }
        Command::Classify { common, nsets } => {
            let pf = load(&common)?;
            let spec = pf.region_spec()?;
            let sets: Vec<VarSet> = nsets
                .iter()
                .map(|s| parse_nset(s))
                .collect::<Result<_, _>>()?;
            let enumeration = region::classify_boundary(&spec, &sets)?;
            let mut dump = dump_records(&spec, &enumeration.records);
            // Solver-located singular points per requested set.
            for n in &sets {
                let crits = region::find_critical_pinned(&spec, &enumeration, n, &[]);
                for c in &crits.points {
                    let coords: Vec<String> = c.point.iter().map(|&x| fmt_sig(x)).collect();
                    let active: Vec<String> = c
                        .active
                        .iter()
                        .map(|&j| spec.surfaces[j].label.clone())
                        .collect();
                    dump.push_str(&format!(
                        "{} | active={} | solved N{}=singular\n",
                        coords.join(" "),
                        active.join("+"),
                        n
                    ));
                }
                for d in &crits.degenerate {
                    let active: Vec<String> = d
                        .active
                        .iter()
                        .map(|&j| spec.surfaces[j].label.clone())
                        .collect();
                    let reason = match d.reason {
                        region::DegenerateReason::DimensionDegenerate => {
                            "stratum-dimension degenerate"
                        }
                        region::DegenerateReason::IdenticallySingular => "identically singular",
                    };
                    dump.push_str(&format!("stratum {} N{} {}\n", active.join("+"), n, reason));
                }
            }
            print!("{}", dump);
            if common.emit_points {
                let path = write_out(&common.out, "classified_points.txt", &dump)?;
                println!("emitted {}", path.display());
            }
            let indeterminate = enumeration
                .records
                .iter()
                .any(|r| r.flags.values().any(|f| *f == NFlag::Indeterminate));
            Ok(if indeterminate { 2 } else { 0 })
        }
    }
}

fn parse_nset(s: &str) -> anyhow::Result<VarSet> {
    let mut indices = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let i: usize = tok
            .parse()
            .with_context(|| format!("bad coordinate index '{}' in --nset", tok))?;
        anyhow::ensure!(i > 0, "--nset indices are 1-based");
        indices.push(i);
    }
    anyhow::ensure!(
        !indices.is_empty(),
        "--nset must name at least one coordinate"
    );
    Ok(VarSet::new(indices))
}
