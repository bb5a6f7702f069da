//! Condition reports: named verdicts, witness points, caveats, and the
//! stable line-oriented text serialization used by the command-line tools.
//!
//! Exit-code contract: 0 certified, 1 refuted, 2 indeterminate, 3 input
//! error. Reports are byte-identical for identical inputs: entries keep
//! insertion order (which callers make deterministic), points are printed at
//! nine significant digits.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Indeterminate, _) | (_, Indeterminate) => Indeterminate,
            (Pass, Pass) => Pass,
        }
    }

    pub fn all<I: IntoIterator<Item = Verdict>>(iter: I) -> Verdict {
        iter.into_iter().fold(Verdict::Pass, Verdict::and)
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

impl From<crate::geometry::Tri> for Verdict {
    fn from(t: crate::geometry::Tri) -> Verdict {
        match t {
            crate::geometry::Tri::True => Verdict::Pass,
            crate::geometry::Tri::False => Verdict::Fail,
            crate::geometry::Tri::Indeterminate => Verdict::Indeterminate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overall {
    CertifiedWithinBox,
    Refuted,
    Indeterminate,
}

impl Overall {
    pub fn exit_code(self) -> i32 {
        match self {
            Overall::CertifiedWithinBox => 0,
            Overall::Refuted => 1,
            Overall::Indeterminate => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Overall::CertifiedWithinBox => "certified-within-box",
            Overall::Refuted => "refuted",
            Overall::Indeterminate => "indeterminate",
        }
    }

    pub fn from_verdict(v: Verdict) -> Overall {
        match v {
            Verdict::Pass => Overall::CertifiedWithinBox,
            Verdict::Fail => Overall::Refuted,
            Verdict::Indeterminate => Overall::Indeterminate,
        }
    }
}

/// A condition violation (or near-violation) with the points that exhibit it.
#[derive(Debug, Clone)]
pub struct Witness {
    pub condition: String,
    pub block: Option<String>,
    pub points: Vec<Vec<f64>>,
    pub diagnostic: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConditionReport {
    pub title: String,
    pub conditions: Vec<(String, Verdict)>,
    pub witnesses: Vec<Witness>,
    pub caveats: Vec<String>,
    pub overall: Option<Overall>,
}

impl ConditionReport {
    pub fn new(title: &str) -> Self {
        ConditionReport {
            title: title.to_string(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, name: &str, v: Verdict) {
        self.conditions.push((name.to_string(), v));
    }

    pub fn verdict_of(&self, name: &str) -> Option<Verdict> {
        self.conditions
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn caveat(&mut self, text: &str) {
        let text = text.to_string();
        if !self.caveats.contains(&text) {
            self.caveats.push(text);
        }
    }

    pub fn combined(&self) -> Verdict {
        Verdict::all(self.conditions.iter().map(|(_, v)| *v))
    }

    pub fn finalize(&mut self) {
        if self.overall.is_none() {
            self.overall = Some(Overall::from_verdict(self.combined()));
        }
        self.witnesses.sort_by(|a, b| {
            (&a.condition, &a.block, &a.diagnostic).cmp(&(&b.condition, &b.block, &b.diagnostic))
        });
        self.caveats.sort();
    }

    pub fn exit_code(&self) -> i32 {
        self.overall.map(|o| o.exit_code()).unwrap_or(2)
    }
}

/// Nine significant digits, deterministic.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000e0".to_string();
    }
    format!("{:.8e}", x)
}

pub fn fmt_point(p: &[f64]) -> String {
    let coords: Vec<String> = p.iter().map(|&x| fmt_sig(x)).collect();
    format!("({})", coords.join(", "))
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "report {}", self.title)?;
        for (name, v) in &self.conditions {
            writeln!(f, "condition {} {}", name, v.label())?;
        }
        for w in &self.witnesses {
            write!(f, "witness {}", w.condition)?;
            if let Some(b) = &w.block {
                write!(f, " block={}", b)?;
            }
            for p in &w.points {
                write!(f, " point={}", fmt_point(p))?;
            }
            writeln!(f, " diagnostic=\"{}\"", w.diagnostic)?;
        }
        for c in &self.caveats {
            writeln!(f, "caveat {}", c)?;
        }
        if let Some(o) = self.overall {
            writeln!(f, "overall {}", o.label())?;
        }
        Ok(())
    }
}
