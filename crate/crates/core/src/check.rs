//! Report-only inequality checks.
//!
//! Every check accumulates the worst normalized slack over the instances it
//! was evaluated on. For `lhs ≤ rhs` the slack is `(rhs − lhs) / max(1, |rhs|)`;
//! a check passes when its worst slack is at least `−tol`.

use serde::Serialize;

/// Default tolerance for inequality checks.
pub const TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst normalized slack; `+∞` when nothing was evaluated.
    pub slack: f64,
    pub tol: f64,
    pub evaluated: usize,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, tol: f64) -> Self {
        Self { name: name.into(), slack: f64::INFINITY, tol, evaluated: 0 }
    }

    fn record(&mut self, slack: f64) {
        self.evaluated += 1;
        // NaN counts as a violation
        if slack.is_nan() {
            self.slack = f64::NEG_INFINITY;
        } else if slack < self.slack {
            self.slack = slack;
        }
    }

    /// Record `lhs ≤ rhs`.
    pub fn le(&mut self, lhs: f64, rhs: f64) {
        let s = if lhs == rhs { 0.0 } else { (rhs - lhs) / rhs.abs().max(1.0) };
        self.record(s);
    }

    /// Record `lhs ≥ rhs`.
    pub fn ge(&mut self, lhs: f64, rhs: f64) {
        let s = if lhs == rhs { 0.0 } else { (lhs - rhs) / rhs.abs().max(1.0) };
        self.record(s);
    }

    /// Record `|lhs − rhs| ≤ tol` (normalized).
    pub fn equal(&mut self, lhs: f64, rhs: f64) {
        let s = if lhs == rhs { 0.0 } else { -(lhs - rhs).abs() / rhs.abs().max(1.0) };
        self.record(s);
    }

    /// Record a boolean outcome.
    pub fn holds(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { f64::NEG_INFINITY });
    }

    pub fn passed(&self) -> bool {
        self.slack >= -self.tol
    }

    /// Fold another result for the same check into this one.
    pub fn merge(&mut self, other: &CheckResult) {
        self.evaluated += other.evaluated;
        if other.slack < self.slack || other.slack.is_nan() {
            self.slack = other.slack;
        }
    }
}

/// Merge a batch of results into `acc`, matching by name and keeping order.
pub fn merge_into(acc: &mut Vec<CheckResult>, batch: &[CheckResult]) {
    for r in batch {
        match acc.iter_mut().find(|a| a.name == r.name) {
            Some(a) => a.merge(r),
            None => acc.push(r.clone()),
        }
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(CheckResult::passed)
}
