//! Problem-file ingestion.
//!
//! A problem is a self-describing, line-oriented text file. `#` starts a
//! comment, blank lines are ignored, unknown keys are rejected. Box and
//! seed are required; there are no implicit defaults for them.
//!
//! ```text
//! dim 3
//! box -2 2  -2 2  -2 2          # lo hi per coordinate
//! surface S1 block A1 : 1-(x1-1/2)^2-x2^2
//! surface S2 block A2 : 1-(x1+1/2)^2-x3^2
//! surface S0 support {1,2} : ...   # optional support override
//! block A1 {1 2}
//! block A2 {1 3}
//! seed 0 0 0
//! blockseed A1 0 0               # optional per-block seed override
//! tol zero 1e-9                  # optional: zero | rank | grid | newton
//! mode thm1                      # thm1 | thm3
//! b 1
//! moment ls S1=1 S2=2            # surface-to-class map
//! moment d 1=0 2=0               # sphere dimension per class
//! reeb coord 1
//! ```

use crate::decomposition::{BlockFamily, DecompError, DecompositionInput, TheoremMode};
use crate::geometry::{BoundingBox, GeomError, Tolerances};
use crate::momentmap::{MomentError, MomentMapInput};
use crate::poly::{PolyError, Polynomial, VarSet};
use crate::region::{CylinderSurface, RegionError, RegionSpec};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum ProblemError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("problem has no {0} section")]
    MissingSection(&'static str),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

fn err(line: usize, msg: impl Into<String>) -> ProblemError {
    ProblemError::Line {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceDecl {
    pub label: String,
    pub poly_text: String,
    pub block: Option<String>,
    pub support_override: Option<VarSet>,
}

#[derive(Debug, Clone, Default)]
pub struct ProblemFile {
    pub dim: usize,
    pub box_bounds: Vec<(f64, f64)>,
    pub surfaces: Vec<SurfaceDecl>,
    pub blocks: Vec<(String, VarSet)>,
    pub seed: Vec<f64>,
    pub block_seeds: BTreeMap<String, Vec<f64>>,
    pub tol: Tolerances,
    pub mode: Option<TheoremMode>,
    pub b: Option<usize>,
    pub moment_ls: BTreeMap<String, usize>,
    pub moment_d: BTreeMap<usize, u32>,
    pub reeb_coord: Option<usize>,
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemError> {
    let mut pf = ProblemFile {
        tol: Tolerances::default(),
        ..Default::default()
    };
    let mut saw_dim = false;
    let mut saw_box = false;
    let mut saw_seed = false;
    let mut saw_mode = false;
    let mut saw_b = false;
    let mut saw_reeb = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        match key {
            "dim" => {
                if saw_dim {
                    return Err(err(line_no, "duplicate 'dim'"));
                }
                pf.dim = rest
                    .parse()
                    .map_err(|_| err(line_no, "dim expects a positive integer"))?;
                if pf.dim == 0 {
                    return Err(err(line_no, "dim must be positive"));
                }
                saw_dim = true;
            }
            "box" => {
                if saw_box {
                    return Err(err(line_no, "duplicate 'box'"));
                }
                let nums = parse_floats(rest, line_no)?;
                if nums.len() % 2 != 0 || nums.is_empty() {
                    return Err(err(line_no, "box expects lo hi pairs, one per coordinate"));
                }
                pf.box_bounds = nums.chunks(2).map(|c| (c[0], c[1])).collect();
                saw_box = true;
            }
            "surface" => {
                let (head, poly_text) = rest
                    .split_once(':')
                    .ok_or_else(|| err(line_no, "surface expects '... : <polynomial>'"))?;
                let mut toks = head.split_whitespace();
                let label = toks
                    .next()
                    .ok_or_else(|| err(line_no, "surface needs a label"))?
                    .to_string();
                let mut block = None;
                let mut support_override = None;
                while let Some(t) = toks.next() {
                    match t {
                        "block" => {
                            let b = toks
                                .next()
                                .ok_or_else(|| err(line_no, "'block' needs a label"))?;
                            block = Some(b.to_string());
                        }
                        "support" => {
                            let s = toks
                                .next()
                                .ok_or_else(|| err(line_no, "'support' needs {i,j,...}"))?;
                            support_override = Some(parse_index_set(s, line_no)?);
                        }
                        other => {
                            return Err(err(
                                line_no,
                                format!("unknown surface attribute '{}'", other),
                            ))
                        }
                    }
                }
                if pf.surfaces.iter().any(|s| s.label == label) {
                    return Err(err(line_no, format!("duplicate surface label {}", label)));
                }
                pf.surfaces.push(SurfaceDecl {
                    label,
                    poly_text: poly_text.trim().to_string(),
                    block,
                    support_override,
                });
            }
            "block" => {
                let mut toks = rest.splitn(2, char::is_whitespace);
                let label = toks
                    .next()
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| err(line_no, "block needs a label"))?
                    .to_string();
                let set = toks
                    .next()
                    .ok_or_else(|| err(line_no, "block needs an index set {i j ...}"))?;
                let set = parse_index_set(set.trim(), line_no)?;
                if pf.blocks.iter().any(|(l, _)| *l == label) {
                    return Err(err(line_no, format!("duplicate block label {}", label)));
                }
                pf.blocks.push((label, set));
            }
            "seed" => {
                if saw_seed {
                    return Err(err(line_no, "duplicate 'seed'"));
                }
                pf.seed = parse_floats(rest, line_no)?;
                saw_seed = true;
            }
            "blockseed" => {
                let mut toks = rest.splitn(2, char::is_whitespace);
                let label = toks
                    .next()
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| err(line_no, "blockseed needs a block label"))?
                    .to_string();
                let coords =
                    parse_floats(toks.next().unwrap_or(""), line_no)?;
                pf.block_seeds.insert(label, coords);
            }
            "tol" => {
                let (which, value) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err(line_no, "tol expects '<name> <value>'"))?;
                match which {
                    "zero" => {
                        pf.tol.zero_tol = value
                            .trim()
                            .parse()
                            .map_err(|_| err(line_no, "bad zero tolerance"))?
                    }
                    "rank" => {
                        pf.tol.rank_rel_tol = value
                            .trim()
                            .parse()
                            .map_err(|_| err(line_no, "bad rank tolerance"))?
                    }
                    "grid" => {
                        pf.tol.grid_res = value
                            .trim()
                            .parse()
                            .map_err(|_| err(line_no, "bad grid resolution"))?
                    }
                    "newton" => {
                        pf.tol.newton_max_iter = value
                            .trim()
                            .parse()
                            .map_err(|_| err(line_no, "bad newton iteration cap"))?
                    }
                    other => {
                        return Err(err(line_no, format!("unknown tolerance '{}'", other)))
                    }
                }
            }
            "mode" => {
                if saw_mode {
                    return Err(err(line_no, "duplicate 'mode'"));
                }
                pf.mode = Some(match rest {
                    "thm1" => TheoremMode::Thm1,
                    "thm3" => TheoremMode::Thm3,
                    other => return Err(err(line_no, format!("unknown mode '{}'", other))),
                });
                saw_mode = true;
            }
            "b" => {
                if saw_b {
                    return Err(err(line_no, "duplicate 'b'"));
                }
                pf.b = Some(
                    rest.parse()
                        .map_err(|_| err(line_no, "b expects a positive integer"))?,
                );
                saw_b = true;
            }
            "moment" => {
                let (which, items) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err(line_no, "moment expects 'ls ...' or 'd ...'"))?;
                match which {
                    "ls" => {
                        for item in items.split_whitespace() {
                            let (label, class) = item.split_once('=').ok_or_else(|| {
                                err(line_no, "moment ls expects SURFACE=CLASS entries")
                            })?;
                            let class: usize = class
                                .parse()
                                .map_err(|_| err(line_no, "bad class number"))?;
                            pf.moment_ls.insert(label.to_string(), class);
                        }
                    }
                    "d" => {
                        for item in items.split_whitespace() {
                            let (class, d) = item.split_once('=').ok_or_else(|| {
                                err(line_no, "moment d expects CLASS=DIM entries")
                            })?;
                            let class: usize =
                                class.parse().map_err(|_| err(line_no, "bad class number"))?;
                            let d: u32 =
                                d.parse().map_err(|_| err(line_no, "bad sphere dimension"))?;
                            pf.moment_d.insert(class, d);
                        }
                    }
                    other => return Err(err(line_no, format!("unknown moment key '{}'", other))),
                }
            }
            "reeb" => {
                if saw_reeb {
                    return Err(err(line_no, "duplicate 'reeb'"));
                }
                let coord = rest
                    .strip_prefix("coord")
                    .map(str::trim)
                    .ok_or_else(|| err(line_no, "reeb expects 'coord <k>'"))?;
                pf.reeb_coord = Some(
                    coord
                        .parse()
                        .map_err(|_| err(line_no, "bad sweep coordinate"))?,
                );
                saw_reeb = true;
            }
            other => return Err(err(line_no, format!("unknown key '{}'", other))),
        }
    }

    if !saw_dim {
        return Err(ProblemError::Missing("dim"));
    }
    if !saw_box {
        return Err(ProblemError::Missing("box"));
    }
    if pf.box_bounds.len() != pf.dim {
        return Err(ProblemError::Missing("box (one lo/hi pair per coordinate)"));
    }
    if !saw_seed {
        return Err(ProblemError::Missing("seed"));
    }
    if pf.seed.len() != pf.dim {
        return Err(ProblemError::Missing("seed (one coordinate per dimension)"));
    }
    if pf.surfaces.is_empty() {
        return Err(ProblemError::Missing("surface"));
    }
    Ok(pf)
}

fn parse_floats(text: &str, line_no: usize) -> Result<Vec<f64>, ProblemError> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| err(line_no, format!("bad number '{}'", t)))
        })
        .collect()
}

/// `{1,2}` or `{1 2}`.
fn parse_index_set(text: &str, line_no: usize) -> Result<VarSet, ProblemError> {
    let inner = text
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| err(line_no, "index set must be written {i,j,...}"))?;
    let mut indices = Vec::new();
    for tok in inner.split(|c: char| c == ',' || c.is_whitespace()) {
        if tok.is_empty() {
            continue;
        }
        let i: usize = tok
            .parse()
            .map_err(|_| err(line_no, format!("bad index '{}'", tok)))?;
        if i == 0 {
            return Err(err(line_no, "indices are 1-based"));
        }
        indices.push(i);
    }
    if indices.is_empty() {
        return Err(err(line_no, "empty index set"));
    }
    Ok(VarSet::new(indices))
}

impl ProblemFile {
    fn bounding_box(&self) -> Result<BoundingBox, ProblemError> {
        let lo = self.box_bounds.iter().map(|&(a, _)| a).collect();
        let hi = self.box_bounds.iter().map(|&(_, b)| b).collect();
        Ok(BoundingBox::new(lo, hi)?)
    }

    fn build_surfaces(&self) -> Result<Vec<CylinderSurface>, ProblemError> {
        self.surfaces
            .iter()
            .map(|decl| {
                let poly = Polynomial::parse(&decl.poly_text, self.dim)?;
                let s = match &decl.support_override {
                    Some(sup) => {
                        CylinderSurface::with_support_override(&decl.label, poly, sup.clone())?
                    }
                    None => CylinderSurface::new(&decl.label, poly)?,
                };
                Ok(s)
            })
            .collect()
    }

    /// The ambient region: all surfaces, ambient seed.
    pub fn region_spec(&self) -> Result<RegionSpec, ProblemError> {
        Ok(RegionSpec::new(
            self.dim,
            self.build_surfaces()?,
            self.seed.clone(),
            self.bounding_box()?,
            self.tol,
        )?)
    }

    pub fn decomposition_input(&self) -> Result<DecompositionInput, ProblemError> {
        if self.blocks.is_empty() {
            return Err(ProblemError::MissingSection("block"));
        }
        let labels: Vec<String> = self.blocks.iter().map(|(l, _)| l.clone()).collect();
        let sets: Vec<VarSet> = self.blocks.iter().map(|(_, s)| s.clone()).collect();
        let family = BlockFamily::new(self.dim, labels.clone(), sets)?;
        let mut assignment = Vec::new();
        for decl in &self.surfaces {
            let block_label = decl.block.as_ref().ok_or(ProblemError::Missing(
                "block assignment on every surface (surface ... block A)",
            ))?;
            let idx = labels
                .iter()
                .position(|l| l == block_label)
                .ok_or_else(|| {
                    ProblemError::Decomp(DecompError::Assignment(format!(
                        "surface {} references unknown block {}",
                        decl.label, block_label
                    )))
                })?;
            assignment.push(idx);
        }
        let mut overrides = BTreeMap::new();
        for (label, coords) in &self.block_seeds {
            let idx = labels.iter().position(|l| l == label).ok_or_else(|| {
                ProblemError::Decomp(DecompError::Assignment(format!(
                    "blockseed references unknown block {}",
                    label
                )))
            })?;
            overrides.insert(idx, coords.clone());
        }
        Ok(DecompositionInput::new(
            self.dim,
            self.build_surfaces()?,
            family,
            assignment,
            self.seed.clone(),
            overrides,
            self.bounding_box()?,
            self.tol,
        )?)
    }

    pub fn moment_input(&self) -> Result<MomentMapInput, ProblemError> {
        if self.moment_ls.is_empty() {
            return Err(ProblemError::MissingSection("moment ls"));
        }
        let region = self.region_spec()?;
        let mut ls = Vec::new();
        for decl in &self.surfaces {
            let class = self.moment_ls.get(&decl.label).ok_or(ProblemError::Moment(
                MomentError::ClassOutOfRange {
                    classes: self.moment_d.len(),
                },
            ))?;
            ls.push(*class);
        }
        let classes = ls.iter().cloned().max().unwrap_or(0);
        let mut d = Vec::new();
        for c in 1..=classes {
            d.push(self.moment_d.get(&c).cloned().unwrap_or(0));
        }
        Ok(MomentMapInput::new(region, ls, d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = "\
# two cylinders
dim 3
box -2 2  -2 2  -2 2
surface S1 block A1 : 1-(x1-1/2)^2-x2^2
surface S2 block A2 : 1-(x1+1/2)^2-x3^2
block A1 {1 2}
block A2 {1,3}
seed 0 0 0
mode thm1
b 1
moment ls S1=1 S2=2
moment d 1=0 2=0
reeb coord 1
";

    #[test]
    fn parses_the_pair_problem() {
        let pf = parse_problem(PAIR).unwrap();
        assert_eq!(pf.dim, 3);
        assert_eq!(pf.surfaces.len(), 2);
        assert_eq!(pf.blocks.len(), 2);
        assert_eq!(pf.mode, Some(TheoremMode::Thm1));
        assert_eq!(pf.b, Some(1));
        assert_eq!(pf.reeb_coord, Some(1));
        let spec = pf.region_spec().unwrap();
        assert_eq!(spec.nvars, 3);
        let input = pf.decomposition_input().unwrap();
        assert_eq!(input.blocks.len(), 2);
        let m = pf.moment_input().unwrap();
        assert_eq!(m.classes(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}\nfrobnicate 3\n", PAIR);
        match parse_problem(&text) {
            Err(ProblemError::Line { msg, .. }) => assert!(msg.contains("unknown key")),
            other => panic!("expected line error, got {:?}", other),
        }
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = "dim 2\nbox -1 1 -1 1\nsurface S : 1-x1^2-x2^2\n";
        assert!(matches!(
            parse_problem(text),
            Err(ProblemError::Missing("seed"))
        ));
    }

    #[test]
    fn support_override_is_wired_through() {
        let text = "\
dim 3
box -2 2 -2 2 -2 2
surface S1 block A1 support {1,2} : 1-(x1-1/2)^2
surface S2 block A1 : 1-(x1-1/2)^2-x2^2
surface S3 block A2 : 1-(x1+1/2)^2-x3^2
block A1 {1 2}
block A2 {1 3}
seed 0 0 0
";
        let pf = parse_problem(text).unwrap();
        let input = pf.decomposition_input().unwrap();
        assert!(input.surfaces[0].support_overridden);
        assert_eq!(input.surfaces[0].support, VarSet::new([1, 2]));
    }

    #[test]
    fn bad_polynomial_reports_through() {
        let text = "dim 2\nbox -1 1 -1 1\nseed 0 0\nsurface S : 1-x9^2\n";
        let pf = parse_problem(text).unwrap();
        assert!(pf.region_spec().is_err());
    }
}
