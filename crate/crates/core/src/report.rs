//! Pass/fail reports shared by the verification and experiment suites.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::torus::TorusPoint;

/// One named check: a measured value compared against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
    /// First point at which the check failed, when it is a point check.
    pub counterexample: Option<TorusPoint>,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            threshold,
            detail: String::new(),
            counterexample: None,
        }
    }

    /// `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value <= threshold, value, threshold)
    }

    /// `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value >= threshold, value, threshold)
    }

    /// `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value > threshold, value, threshold)
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn with_counterexample(mut self, p: Option<TorusPoint>) -> Self {
        if !self.passed {
            self.counterexample = p;
        }
        self
    }
}

/// An ordered list of checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.title)?;
        for c in &self.checks {
            write!(
                f,
                "{} {} value={:e} threshold={:e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            )?;
            if !c.detail.is_empty() {
                write!(f, " ({})", c.detail)?;
            }
            if let Some(p) = c.counterexample {
                write!(f, " at ({:.17}, {:.17})", p.u, p.v)?;
            }
            writeln!(f)?;
        }
        write!(f, "overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_aggregates() {
        let mut r = Report::new("demo");
        r.push(Check::at_most("small", 1.0, 2.0));
        assert!(r.passed());
        r.push(Check::above("margin", 0.0, 0.0).with_counterexample(Some(TorusPoint::ORIGIN)));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 1);
        let text = r.to_string();
        assert!(text.contains("PASS small") && text.contains("FAIL margin") && text.ends_with("overall: FAIL"));
    }
}
