//! Published benchmark results and a small report format for checking
//! computed values against them.

pub mod reference;

use std::fmt;

/// How far a computed value may sit from its reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    pub fn admits(self, got: f64, expected: f64) -> bool {
        let slack = match self {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(t) => t * expected.abs(),
        };
        (got - expected).abs() <= slack
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Absolute(t) => write!(f, "±{t}"),
            Tolerance::Relative(t) => write!(f, "±{}%", t * 100.0),
        }
    }
}

/// One sub-check of a criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    /// A computed value compared with a reference value.
    pub fn within(name: impl Into<String>, got: f64, expected: f64, tolerance: Tolerance) -> Self {
        Self {
            name: name.into(),
            pass: tolerance.admits(got, expected),
            detail: format!("got {got:.6}, expected {expected} {tolerance}"),
        }
    }

    /// A property that holds or not, with a description of what was examined.
    pub fn holds(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// A numbered acceptance criterion and its sub-checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub number: u32,
    pub title: String,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn new(number: u32, title: impl Into<String>) -> Self {
        Self {
            number,
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    /// True when there is at least one sub-check and all of them pass.
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    /// The one-line verdict.
    pub fn verdict(&self) -> String {
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        let status = if self.passed() { "PASS" } else { "FAIL" };
        format!(
            "{status} criterion {} ({}): {}/{} checks passed",
            self.number,
            self.title,
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "criterion {}: {}", self.number, self.title)?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {}: {}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}
