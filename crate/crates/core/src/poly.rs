//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! A [`Polynomial`] is a canonical map from exponent vectors to nonzero
//! rational coefficients. All arithmetic is exact; only evaluation output is
//! rounded to `f64`, once, at the end.
//!
//! Text grammar (used by [`Polynomial::parse`] and by `Display`):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor ('*' factor)*
//! factor   := '-' factor | base ('^' uint)?
//! base     := '(' expr ')' | rational | variable
//! rational := uint ('/' uint)? | uint '.' digits      (<= 12 fractional digits)
//! variable := 'x' uint                                 (1-based index)
//! ```
//!
//! There is no implicit multiplication: write `2*x1`, not `2x1`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable x{var} out of range (nvars = {nvars})")]
    VarOutOfRange { var: usize, nvars: usize },
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("support {support} is not contained in {set}")]
    SupportNotContained { support: String, set: String },
    #[error("point coordinate is not finite")]
    NonFiniteCoordinate,
}

/// A sorted set of 1-based coordinate indices.
///
/// Used for variable supports, coordinate blocks and the index sets that
/// projections are taken against.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VarSet {
    indices: BTreeSet<usize>,
}

impl VarSet {
    pub fn new<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        VarSet {
            indices: indices.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        VarSet::default()
    }

    pub fn singleton(i: usize) -> Self {
        VarSet::new([i])
    }

    pub fn full(n: usize) -> Self {
        VarSet::new(1..=n)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.indices.iter().copied().collect()
    }

    pub fn is_subset(&self, other: &VarSet) -> bool {
        self.indices.is_subset(&other.indices)
    }

    pub fn is_disjoint(&self, other: &VarSet) -> bool {
        self.indices.is_disjoint(&other.indices)
    }

    pub fn intersection(&self, other: &VarSet) -> VarSet {
        VarSet::new(self.indices.intersection(&other.indices).copied())
    }

    pub fn union(&self, other: &VarSet) -> VarSet {
        VarSet::new(self.indices.union(&other.indices).copied())
    }

    pub fn minus(&self, other: &VarSet) -> VarSet {
        VarSet::new(self.indices.difference(&other.indices).copied())
    }

    pub fn max(&self) -> Option<usize> {
        self.indices.iter().next_back().copied()
    }

    /// Position of index `i` in the sorted order (0-based), if present.
    ///
    /// This realizes the order-preserving bijection onto `{1, ..., len}`.
    pub fn position(&self, i: usize) -> Option<usize> {
        if !self.contains(i) {
            return None;
        }
        Some(self.indices.range(..i).count())
    }
}

impl fmt::Display for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i)?;
        }
        write!(f, "}}")
    }
}

/// Sparse multivariate polynomial over the rationals.
///
/// Invariants: no stored coefficient is zero, every exponent vector has
/// length `nvars`, and equality of the term maps is equality of polynomials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.insert_term(vec![0; nvars], c);
        p
    }

    pub fn from_i64(nvars: usize, c: i64) -> Self {
        Polynomial::constant(nvars, Rational::from_integer(BigInt::from(c)))
    }

    /// The monomial `x_i` (1-based index).
    pub fn variable(nvars: usize, i: usize) -> Result<Self, PolyError> {
        if i == 0 || i > nvars {
            return Err(PolyError::VarOutOfRange { var: i, nvars });
        }
        let mut exps = vec![0; nvars];
        exps[i - 1] = 1;
        let mut p = Polynomial::zero(nvars);
        p.insert_term(exps, Rational::one());
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exps: &[u32]) -> Rational {
        self.terms.get(exps).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    fn insert_term(&mut self, exps: Vec<u32>, coeff: Rational) {
        debug_assert_eq!(exps.len(), self.nvars);
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + &coeff;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars, "polynomial arity mismatch");
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars, "polynomial arity mismatch");
        let mut out = Polynomial::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert_term(exps, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, k)| (e.clone(), k * c)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.nvars, Rational::one());
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn evaluate_exact(&self, point: &[Rational]) -> Result<Rational, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: point.len(),
            });
        }
        let mut acc = Rational::zero();
        for (exps, coeff) in &self.terms {
            let mut term = coeff.clone();
            for (i, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    term *= &point[i];
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Evaluation at a floating point: the point is converted exactly to
    /// rationals, the sum is accumulated exactly, and the result is rounded
    /// once at the end.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        let exact = self.evaluate_rational_of_floats(point)?;
        Ok(exact.to_f64().unwrap_or(f64::NAN))
    }

    /// Exact-rational value at a floating point (each `f64` is exact).
    pub fn evaluate_rational_of_floats(&self, point: &[f64]) -> Result<Rational, PolyError> {
        let rats: Vec<Rational> = point
            .iter()
            .map(|&x| Rational::from_float(x).ok_or(PolyError::NonFiniteCoordinate))
            .collect::<Result<_, _>>()?;
        self.evaluate_exact(&rats)
    }

    /// Fast approximate evaluation in `f64` arithmetic. Used in grid sweeps
    /// and Newton iterations; final residual checks go through the exact
    /// path.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        let mut acc = 0.0;
        for (exps, coeff) in &self.terms {
            let mut term = rational_to_f64(coeff);
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    term *= point[i].powi(e as i32);
                }
            }
            acc += term;
        }
        acc
    }

    /// Partial derivative with respect to `x_i` (1-based).
    pub fn partial(&self, i: usize) -> Polynomial {
        assert!(i >= 1 && i <= self.nvars, "variable index out of range");
        let mut out = Polynomial::zero(self.nvars);
        for (exps, coeff) in &self.terms {
            let e = exps[i - 1];
            if e == 0 {
                continue;
            }
            let mut d = exps.clone();
            d[i - 1] = e - 1;
            out.insert_term(d, coeff * Rational::from_integer(BigInt::from(e)));
        }
        out
    }

    /// The gradient as a vector of polynomials, component `i` = `d/dx_{i+1}`.
    pub fn gradient(&self) -> Vec<Polynomial> {
        (1..=self.nvars).map(|i| self.partial(i)).collect()
    }

    /// Indices of variables that occur with positive exponent in some term.
    pub fn support(&self) -> VarSet {
        let mut s = BTreeSet::new();
        for exps in self.terms.keys() {
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    s.insert(i + 1);
                }
            }
        }
        VarSet { indices: s }
    }

    /// Rewrites a polynomial supported on `a` into `a.len()` variables via
    /// the order-preserving bijection from `a` onto `{1, ..., a.len()}`.
    pub fn relabel(&self, a: &VarSet) -> Result<Polynomial, PolyError> {
        let sup = self.support();
        if !sup.is_subset(a) {
            return Err(PolyError::SupportNotContained {
                support: sup.to_string(),
                set: a.to_string(),
            });
        }
        let order = a.to_vec();
        let mut out = Polynomial::zero(order.len());
        for (exps, coeff) in &self.terms {
            let new_exps: Vec<u32> = order.iter().map(|&i| exps[i - 1]).collect();
            out.insert_term(new_exps, coeff.clone());
        }
        Ok(out)
    }

    /// Embeds a polynomial in `a.len()` variables back into `nvars` ambient
    /// variables, variable `k` becoming the `k`-th smallest element of `a`.
    pub fn unrelabel(&self, a: &VarSet, nvars: usize) -> Result<Polynomial, PolyError> {
        if a.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: a.len(),
                got: self.nvars,
            });
        }
        if a.max().unwrap_or(0) > nvars {
            return Err(PolyError::VarOutOfRange {
                var: a.max().unwrap_or(0),
                nvars,
            });
        }
        let order = a.to_vec();
        let mut out = Polynomial::zero(nvars);
        for (exps, coeff) in &self.terms {
            let mut new_exps = vec![0u32; nvars];
            for (k, &e) in exps.iter().enumerate() {
                new_exps[order[k] - 1] = e;
            }
            out.insert_term(new_exps, coeff.clone());
        }
        Ok(out)
    }

    pub fn parse(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
        Parser::new(text, nvars).parse()
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Determinant of a square matrix of polynomials, by cofactor expansion.
/// All entries must share the same arity. Intended for the small minors
/// (k <= 4) that the rank conditions produce.
pub fn determinant(mat: &[Vec<&Polynomial>]) -> Polynomial {
    let k = mat.len();
    assert!(k > 0, "empty determinant");
    let nvars = mat[0][0].nvars();
    if k == 1 {
        return mat[0][0].clone();
    }
    let mut acc = Polynomial::zero(nvars);
    for (j, top) in mat[0].iter().enumerate() {
        if top.is_zero() {
            continue;
        }
        let sub: Vec<Vec<&Polynomial>> = mat[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, p)| *p)
                    .collect()
            })
            .collect();
        let minor = determinant(&sub);
        let signed = if j % 2 == 0 { minor } else { minor.neg() };
        acc = acc.add(&top.mul(&signed));
    }
    acc
}

// ---------------------------------------------------------------------------
// Display
// ---------------------------------------------------------------------------

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Ascending total degree, then lexicographic exponents.
        let mut entries: Vec<(&Vec<u32>, &Rational)> = self.terms.iter().collect();
        entries.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            da.cmp(&db).then_with(|| a.0.cmp(b.0))
        });
        for (k, (exps, coeff)) in entries.iter().enumerate() {
            let neg = coeff.is_negative();
            let mag = coeff.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mono = monomial_string(exps);
            if mono.is_empty() {
                write!(f, "{}", mag)?;
            } else if mag.is_one() {
                write!(f, "{}", mono)?;
            } else {
                write!(f, "{}*{}", mag, mono)?;
            }
        }
        Ok(())
    }
}

fn monomial_string(exps: &[u32]) -> String {
    let mut parts = Vec::new();
    for (i, &e) in exps.iter().enumerate() {
        if e == 1 {
            parts.push(format!("x{}", i + 1));
        } else if e > 1 {
            parts.push(format!("x{}^{}", i + 1, e));
        }
    }
    parts.join("*")
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    nvars: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, nvars: usize) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            nvars,
        }
    }

    fn parse(mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        let p = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(p)
    }

    fn err(&self, msg: &str) -> PolyError {
        PolyError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ') | Some(b'\t')) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.bump();
                    self.skip_ws();
                    let t = self.term()?;
                    acc = acc.add(&t);
                }
                Some(b'-') => {
                    self.bump();
                    self.skip_ws();
                    let t = self.term()?;
                    acc = acc.sub(&t);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.bump();
                self.skip_ws();
                let f = self.factor()?;
                acc = acc.mul(&f);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.bump();
            let f = self.factor()?;
            return Ok(f.neg());
        }
        let base = self.base()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.bump();
            self.skip_ws();
            let e = self.uint("exponent")?;
            if e > 64 {
                return Err(self.err("exponent too large (limit 64)"));
            }
            return Ok(base.pow(e as u32));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.bump();
                let inner = self.expr()?;
                self.skip_ws();
                if self.bump() != Some(b')') {
                    self.pos -= usize::from(self.pos > 0 && self.pos <= self.src.len());
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(b'x') => {
                self.bump();
                let start = self.pos;
                let idx = self.uint("variable index")? as usize;
                if idx == 0 {
                    self.pos = start;
                    return Err(self.err("variable indices are 1-based"));
                }
                if idx > self.nvars {
                    return Err(PolyError::VarOutOfRange {
                        var: idx,
                        nvars: self.nvars,
                    });
                }
                Ok(Polynomial::variable(self.nvars, idx).expect("checked range"))
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(_) => Err(self.err("expected '(', number or variable")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn uint(&mut self, what: &str) -> Result<u64, PolyError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == start {
            return Err(self.err(&format!("expected {}", what)));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<u64>()
            .map_err(|_| self.err(&format!("{} too large", what)))
    }

    fn digits(&mut self) -> Result<&'a str, PolyError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == start {
            return Err(self.err("expected digits"));
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).unwrap())
    }

    fn number(&mut self) -> Result<Polynomial, PolyError> {
        let int_part = self.digits()?;
        match self.peek() {
            Some(b'.') => {
                self.bump();
                let frac_start = self.pos;
                let frac = self.digits()?;
                if frac.len() > 12 {
                    self.pos = frac_start;
                    return Err(self.err("decimal literal has more than 12 fractional digits"));
                }
                let numer: BigInt = format!("{}{}", int_part, frac).parse().unwrap();
                let denom = BigInt::from(10u32).pow(frac.len() as u32);
                Ok(Polynomial::constant(
                    self.nvars,
                    Rational::new(numer, denom),
                ))
            }
            Some(b'/') => {
                self.bump();
                self.skip_ws();
                let denom_pos = self.pos;
                let den = self.digits()?;
                let den: BigInt = den.parse().unwrap();
                if den.is_zero() {
                    self.pos = denom_pos;
                    return Err(self.err("zero denominator"));
                }
                let num: BigInt = int_part.parse().unwrap();
                Ok(Polynomial::constant(self.nvars, Rational::new(num, den)))
            }
            _ => {
                let num: BigInt = int_part.parse().unwrap();
                Ok(Polynomial::constant(
                    self.nvars,
                    Rational::from_integer(num),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn example1_f1() -> Polynomial {
        Polynomial::parse("1-(x1-1/2)^2-x2^2", 3).unwrap()
    }

    #[test]
    fn parse_example_circle_terms() {
        let p = example1_f1();
        assert_eq!(p.nvars(), 3);
        assert_eq!(p.coefficient(&[0, 0, 0]), rat(3, 4));
        assert_eq!(p.coefficient(&[1, 0, 0]), rat(1, 1));
        assert_eq!(p.coefficient(&[2, 0, 0]), rat(-1, 1));
        assert_eq!(p.coefficient(&[0, 2, 0]), rat(-1, 1));
        assert_eq!(p.num_terms(), 4);
    }

    #[test]
    fn parse_zero() {
        let p = Polynomial::parse("0", 2).unwrap();
        assert!(p.is_zero());
        assert_eq!(p.num_terms(), 0);
    }

    /// Independent term-by-term multiplication oracle: expand (sum of
    /// monomials) x (sum of monomials) over flat vectors, no BTreeMap.
    fn naive_mul(a: &[(Vec<u32>, Rational)], b: &[(Vec<u32>, Rational)]) -> Vec<(Vec<u32>, Rational)> {
        let mut out: Vec<(Vec<u32>, Rational)> = Vec::new();
        for (ea, ca) in a {
            for (eb, cb) in b {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                if let Some(slot) = out.iter_mut().find(|(ee, _)| *ee == e) {
                    slot.1 += ca * cb;
                } else {
                    out.push((e, ca * cb));
                }
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        out
    }

    #[test]
    fn parse_product_matches_expansion_oracle() {
        let p = Polynomial::parse("(x1+x2)*(x1-x2)", 2).unwrap();
        let a = vec![
            (vec![1, 0], rat(1, 1)),
            (vec![0, 1], rat(1, 1)),
        ];
        let b = vec![
            (vec![1, 0], rat(1, 1)),
            (vec![0, 1], rat(-1, 1)),
        ];
        let mut expect = naive_mul(&a, &b);
        expect.sort();
        let mut got: Vec<(Vec<u32>, Rational)> =
            p.terms().map(|(e, c)| (e.clone(), c.clone())).collect();
        got.sort();
        assert_eq!(got, expect);
        // x1^2 - x2^2
        assert_eq!(p.coefficient(&[2, 0]), rat(1, 1));
        assert_eq!(p.coefficient(&[0, 2]), rat(-1, 1));
        assert_eq!(p.num_terms(), 2);
    }

    #[test]
    fn syntax_errors_report_position() {
        match Polynomial::parse("1 + * x1", 2) {
            Err(PolyError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected syntax error, got {:?}", other),
        }
        match Polynomial::parse("x5", 3) {
            Err(PolyError::VarOutOfRange { var: 5, nvars: 3 }) => {}
            other => panic!("expected range error, got {:?}", other),
        }
        assert!(Polynomial::parse("1/0", 1).is_err());
        assert!(Polynomial::parse("0.1234567890123", 1).is_err());
        assert!(Polynomial::parse("2x1", 2).is_err());
    }

    #[test]
    fn decimal_literals_are_exact() {
        let p = Polynomial::parse("0.5", 1).unwrap();
        assert_eq!(p.coefficient(&[0]), rat(1, 2));
        let q = Polynomial::parse("1.25*x1", 1).unwrap();
        assert_eq!(q.coefficient(&[1]), rat(5, 4));
    }

    #[test]
    fn evaluate_example_values() {
        let f1 = example1_f1();
        // 1 - 0 - 0 = 1
        assert_eq!(f1.evaluate(&[0.5, 0.0, 0.0]).unwrap(), 1.0);
        let z = Polynomial::zero(4);
        assert_eq!(z.evaluate(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.0);
        // 1 + r - 0 - 0 - 0 with r = 1/10 at x1 = -1/2
        let f2 = Polynomial::parse("1+1/10-(x1+1/2)^2-x2^2-x4^2", 4).unwrap();
        let v = f2
            .evaluate_exact(&[rat(-1, 2), rat(0, 1), rat(0, 1), rat(0, 1)])
            .unwrap();
        assert_eq!(v, rat(11, 10));
    }

    #[test]
    fn evaluate_dimension_mismatch() {
        let f1 = example1_f1();
        assert!(matches!(
            f1.evaluate(&[0.0, 0.0]),
            Err(PolyError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn gradient_hand_checked() {
        let f1 = example1_f1();
        let g = f1.gradient();
        // (-2(x1 - 1/2), -2 x2, 0) = (1 - 2 x1, -2 x2, 0)
        assert_eq!(g[0], Polynomial::parse("1-2*x1", 3).unwrap());
        assert_eq!(g[1], Polynomial::parse("-2*x2", 3).unwrap());
        assert!(g[2].is_zero());

        let c = Polynomial::parse("7/3", 2).unwrap();
        assert!(c.gradient().iter().all(|p| p.is_zero()));

        let xy = Polynomial::parse("x1*x2", 2).unwrap();
        let g = xy.gradient();
        assert_eq!(g[0], Polynomial::parse("x2", 2).unwrap());
        assert_eq!(g[1], Polynomial::parse("x1", 2).unwrap());
    }

    #[test]
    fn support_examples() {
        assert_eq!(example1_f1().support(), VarSet::new([1, 2]));
        assert!(Polynomial::parse("5", 3).unwrap().support().is_empty());
        let f2 = Polynomial::parse("1+1/10-(x1+1/2)^2-x2^2-x4^2", 4).unwrap();
        assert_eq!(f2.support(), VarSet::new([1, 2, 4]));
    }

    #[test]
    fn relabel_examples() {
        // f2 of the two-cylinder pair, supported on {1,3}, in 3 variables.
        let f2 = Polynomial::parse("1-(x1+1/2)^2-x3^2", 3).unwrap();
        let r = f2.relabel(&VarSet::new([1, 3])).unwrap();
        let expect = Polynomial::parse("1-(x1+1/2)^2-x2^2", 2).unwrap();
        assert_eq!(r, expect);

        // Identity relabeling.
        let p = Polynomial::parse("x1^2+x2", 2).unwrap();
        assert_eq!(p.relabel(&VarSet::new([1, 2])).unwrap(), p);

        // Single variable.
        let q = Polynomial::parse("x3^2", 3).unwrap();
        assert_eq!(
            q.relabel(&VarSet::singleton(3)).unwrap(),
            Polynomial::parse("x1^2", 1).unwrap()
        );

        // Support not contained.
        assert!(matches!(
            example1_f1().relabel(&VarSet::singleton(1)),
            Err(PolyError::SupportNotContained { .. })
        ));
    }

    #[test]
    fn relabel_commutes_with_evaluation_exactly() {
        // Substitution oracle on random rational points, exact arithmetic.
        let f2 = Polynomial::parse("1-(x1+1/2)^2-x3^2", 3).unwrap();
        let a = VarSet::new([1, 3]);
        let r = f2.relabel(&a).unwrap();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as i64 % 41) - 20
        };
        for _ in 0..100 {
            let pt: Vec<Rational> = (0..3).map(|_| rat(next(), 7)).collect();
            let full = f2.evaluate_exact(&pt).unwrap();
            let extracted: Vec<Rational> = a.iter().map(|i| pt[i - 1].clone()).collect();
            let reduced = r.evaluate_exact(&extracted).unwrap();
            assert_eq!(full, reduced);
        }
    }

    #[test]
    fn support_is_minimal_for_relabel() {
        let f1 = example1_f1();
        let sup = f1.support();
        for i in sup.iter() {
            let smaller = sup.minus(&VarSet::singleton(i));
            assert!(f1.relabel(&smaller).is_err());
        }
    }

    #[test]
    fn unrelabel_round_trip() {
        let f2 = Polynomial::parse("1-(x1+1/2)^2-x3^2", 3).unwrap();
        let a = VarSet::new([1, 3]);
        let r = f2.relabel(&a).unwrap();
        assert_eq!(r.unrelabel(&a, 3).unwrap(), f2);
    }

    #[test]
    fn display_reparses_to_equal_polynomial() {
        let corpus = [
            ("1-(x1-1/2)^2-x2^2", 3),
            ("0", 2),
            ("(x1+x2)*(x1-x2)", 2),
            ("1+1/10-(x1+1/2)^2-x2^2-x4^2", 4),
            ("-x1^3 + 2/7*x2 - 5", 2),
            ("x1*x2*x3", 3),
        ];
        for (text, n) in corpus {
            let p = Polynomial::parse(text, n).unwrap();
            let reparsed = Polynomial::parse(&p.to_string(), n).unwrap();
            assert_eq!(p, reparsed, "round trip failed for {}", text);
        }
    }

    #[test]
    fn determinant_small_cases() {
        let a = Polynomial::parse("x1", 2);
        let b = Polynomial::parse("x2", 2);
        let c = Polynomial::parse("1", 2);
        let d = Polynomial::parse("x1*x2", 2);
        let (a, b, c, d) = (a.unwrap(), b.unwrap(), c.unwrap(), d.unwrap());
        let det = determinant(&[vec![&a, &b], vec![&c, &d]]);
        // x1 * x1 x2 - x2 * 1 = x1^2 x2 - x2
        let expect = Polynomial::parse("x1^2*x2 - x2", 2).unwrap();
        assert_eq!(det, expect);
    }
}
