//! Pass/fail records produced by the verification routines.

use alloc::string::String;
use alloc::vec::Vec;

/// One checked relation: `residual ≤ tolerance`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "String::is_empty", default))]
    pub note: String,
}

impl Check {
    /// Passes when `residual ≤ tolerance` (NaN fails).
    pub fn within(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: residual <= tolerance, residual, tolerance, note: String::new() }
    }

    /// Inequality `lhs ≤ rhs + tolerance`; the residual is the excess.
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::within(name, lhs - rhs, tolerance)
    }

    /// A skipped check (precondition not met) counts as passed.
    pub fn skipped(name: impl Into<String>, note: impl Into<String>) -> Self {
        Self { name: name.into(), passed: true, residual: 0.0, tolerance: 0.0, note: note.into() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// A list of checks from one verification routine.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Largest residual-to-tolerance ratio (0 when empty).
    pub fn worst_ratio(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.tolerance > 0.0)
            .map(|c| c.residual / c.tolerance)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_compare_against_tolerance() {
        assert!(Check::within("a", 1e-9, 1e-8).passed);
        assert!(!Check::within("b", f64::NAN, 1.0).passed);
        assert!(Check::at_most("c", 1.0, 1.0, 0.0).passed);
        let mut r = Report::default();
        r.push(Check::at_most("d", 2.0, 1.0, 0.5));
        r.push(Check::skipped("e", "precondition"));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 1);
        assert_eq!(r.worst_ratio(), 2.0);
    }
}
