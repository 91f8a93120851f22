//! Check entries, reports and their text and JSON renderings.

use std::fmt::Write as _;

use serde::Serialize;

/// What a check is claimed to do on a particular spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    /// Applicable and within tolerance.
    Pass,
    /// Applicable with residual above `10³ ×` tolerance.
    Nonzero,
    NotApplicable,
    /// No claim.
    Info,
}

impl Expect {
    pub fn label(self) -> &'static str {
        match self {
            Expect::Pass => "pass",
            Expect::Nonzero => "nonzero",
            Expect::NotApplicable => "n/a",
            Expect::Info => "info",
        }
    }
}

/// Factor separating "nonzero" claims from tolerance noise.
pub const NONZERO_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    /// The identity whose residual is measured.
    pub anchor: String,
    /// Largest residual over the grid; infinite when some point failed to
    /// evaluate.
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub applicable: bool,
    pub worst_point: Option<Vec<f64>>,
    pub note: Option<String>,
    pub expect: Expect,
}

impl CheckEntry {
    pub fn meets_expectation(&self) -> bool {
        match self.expect {
            Expect::Pass => self.applicable && self.pass,
            Expect::Nonzero => self.applicable && self.residual > NONZERO_FACTOR * self.tol,
            Expect::NotApplicable => !self.applicable,
            Expect::Info => true,
        }
    }

    pub fn verdict(&self) -> &'static str {
        match (self.applicable, self.pass) {
            (false, _) => "N/A",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        }
    }
}

/// Sampling parameters recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub points: usize,
    pub seed: u64,
    pub margin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub spec: String,
    pub seed: u64,
    pub grid: GridSummary,
    pub checks: Vec<CheckEntry>,
    /// Every applicable entry passes.
    pub overall: bool,
    pub kappa: f64,
    /// Every entry meets its expectation.
    pub claims_met: bool,
}

impl CheckReport {
    pub fn new(spec: impl Into<String>, grid: GridSummary, kappa: f64, checks: Vec<CheckEntry>) -> Self {
        let mut r = CheckReport { spec: spec.into(), seed: grid.seed, grid, checks, overall: false, kappa, claims_met: false };
        r.refresh();
        r
    }

    /// Recomputes the summary verdicts from the entries.
    pub fn refresh(&mut self) {
        self.overall = self.checks.iter().filter(|c| c.applicable).all(|c| c.pass);
        self.claims_met = self.checks.iter().all(CheckEntry::meets_expectation);
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Sets expectations by entry name or by `prefix*`, then refreshes.
    pub fn set_expectations(&mut self, claims: &[(&str, Expect)]) {
        for (pattern, expect) in claims {
            for c in &mut self.checks {
                let hit = match pattern.strip_suffix('*') {
                    Some(prefix) => c.name.starts_with(prefix),
                    None => c.name == *pattern,
                };
                if hit {
                    c.expect = *expect;
                }
            }
        }
        self.refresh();
    }

    pub fn merge(mut self, other: CheckReport) -> CheckReport {
        self.checks.extend(other.checks);
        self.refresh();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table followed by the summary lines.
    pub fn to_text(&self) -> String {
        let headers = ["check", "verdict", "expect", "residual", "tol", "anchor", "worst point / note"];
        let rows: Vec<[String; 7]> = self
            .checks
            .iter()
            .map(|c| {
                let mut tail = c
                    .worst_point
                    .as_ref()
                    .map(|p| format!("({})", p.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")))
                    .unwrap_or_default();
                if let Some(n) = &c.note {
                    if !tail.is_empty() {
                        tail.push_str("  ");
                    }
                    tail.push_str(n);
                }
                let flag = if c.meets_expectation() { "" } else { " !" };
                [
                    c.name.clone(),
                    c.verdict().to_string(),
                    format!("{}{flag}", c.expect.label()),
                    format!("{:e}", c.residual),
                    format!("{:e}", c.tol),
                    c.anchor.clone(),
                    tail,
                ]
            })
            .collect();
        let mut width = headers.map(|h| h.chars().count());
        for r in &rows {
            for (w, cell) in width.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(width).enumerate() {
                if i + 1 == cells.len() {
                    s.push_str(cell);
                } else {
                    let pad = w - cell.chars().count();
                    s.push_str(cell);
                    s.push_str(&" ".repeat(pad + 2));
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&headers.map(String::from));
        for r in &rows {
            line(r);
        }
        let _ = writeln!(
            out,
            "spec {}  grid {} points  seed {}  kappa {}",
            self.spec, self.grid.points, self.seed, self.kappa
        );
        let _ = writeln!(out, "overall {}", if self.overall { "PASS" } else { "FAIL" });
        let _ = writeln!(out, "claims {}", if self.claims_met { "MET" } else { "NOT MET" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, residual: f64, applicable: bool) -> CheckEntry {
        CheckEntry {
            name: name.into(),
            anchor: "a = b".into(),
            residual,
            tol: 1e-6,
            pass: residual <= 1e-6,
            applicable,
            worst_point: Some(vec![0.5, -1.0]),
            note: None,
            expect: Expect::Info,
        }
    }

    #[test]
    fn verdicts_and_claims() {
        let grid = GridSummary { points: 1, seed: 3, margin: vec![0.0, 0.0] };
        let mut r = CheckReport::new(
            "t",
            grid,
            0.5,
            vec![entry("x.a", 1e-8, true), entry("x.b", 2.0, true), entry("y", 1.0, false)],
        );
        assert!(!r.overall);
        assert!(r.claims_met);
        r.set_expectations(&[("x.*", Expect::Pass)]);
        assert!(!r.claims_met);
        r.set_expectations(&[("x.b", Expect::Nonzero), ("y", Expect::NotApplicable)]);
        assert!(r.claims_met);
        let text = r.to_text();
        assert!(text.contains("x.b    FAIL"), "{text}");
        assert!(text.lines().last().unwrap().ends_with("MET"));
    }

    #[test]
    fn json_is_stable_and_round_trips_numbers() {
        let grid = GridSummary { points: 1, seed: 3, margin: vec![0.0] };
        let r = CheckReport::new("t", grid, 0.5, vec![entry("a", 0.1 + 0.2, true)]);
        let j = r.to_json();
        assert_eq!(j, r.clone().to_json());
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["checks"][0]["residual"].as_f64().unwrap(), 0.1 + 0.2);
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert!(keys.iter().any(|k| *k == "overall"));
    }
}
