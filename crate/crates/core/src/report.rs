use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One named residual check: the largest residual seen over all samples and
/// the input that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    pub seed: u64,
    /// NaN is written as `null` in JSON and always fails.
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub worst_input: Option<String>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, samples: usize, seed: u64, max_residual: f64, tolerance: f64) -> Self {
        let mut c = CheckResult {
            name: name.into(),
            samples,
            seed,
            max_residual,
            tolerance,
            passed: false,
            worst_input: None,
        };
        c.rejudge();
        c
    }

    pub fn with_input(mut self, input: impl Into<String>) -> Self {
        self.worst_input = Some(input.into());
        self
    }

    fn rejudge(&mut self) {
        self.passed = self.max_residual.is_finite() && self.max_residual < self.tolerance;
    }
}

/// A free-form key/value line attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub subject: String,
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<Note>,
}

impl Report {
    pub fn new(subject: impl Into<String>) -> Self {
        Report {
            subject: subject.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = CheckResult>) {
        self.checks.extend(checks);
    }

    /// Appends the checks and notes of `other`, prefixing check names.
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        for mut c in other.checks {
            if !prefix.is_empty() {
                c.name = format!("{prefix}/{}", c.name);
            }
            self.checks.push(c);
        }
        self.notes.extend(other.notes);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.notes.push(Note {
            key: key.into(),
            value: value.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Residual of the named check, or `NaN` if absent.
    pub fn residual(&self, name: &str) -> f64 {
        self.check(name).map_or(f64::NAN, |c| c.max_residual)
    }

    /// Largest residual among checks whose name ends with `suffix`.
    pub fn max_residual_matching(&self, suffix: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.ends_with(suffix))
            .fold(0.0, |acc, c| {
                if c.max_residual.is_nan() || c.max_residual > acc {
                    c.max_residual
                } else {
                    acc
                }
            })
    }

    /// Overrides tolerances. A key matches a check whose full name equals it
    /// or whose last `/`-separated segment equals it.
    pub fn apply_tolerances(&mut self, overrides: &BTreeMap<String, f64>) {
        for c in &mut self.checks {
            let short = c.name.rsplit('/').next().unwrap_or(&c.name);
            if let Some(t) = overrides.get(&c.name).or_else(|| overrides.get(short)) {
                c.tolerance = *t;
                c.rejudge();
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subject: {}", self.subject);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<48} residual={:.3e} tol={:.1e} samples={} seed={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.max_residual,
                c.tolerance,
                c.samples,
                c.seed
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note {}: {}", n.key, n.value);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,samples,seed,max_residual,tolerance,passed\n");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{}",
                c.name, c.samples, c.seed, c.max_residual, c.tolerance, c.passed
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_and_infinite_residuals_fail() {
        assert!(!CheckResult::new("a", 1, 0, f64::NAN, 1.0).passed);
        assert!(!CheckResult::new("a", 1, 0, f64::INFINITY, 1.0).passed);
        assert!(CheckResult::new("a", 1, 0, 0.5, 1.0).passed);
    }

    #[test]
    fn tolerance_override_by_short_name() {
        let mut r = Report::new("x");
        r.absorb("so3", {
            let mut q = Report::new("so3");
            q.push(CheckResult::new("flip", 10, 1, 1e-6, 1e-9));
            q
        });
        assert!(!r.passed());
        let mut t = BTreeMap::new();
        t.insert("flip".to_string(), 1e-5);
        r.apply_tolerances(&t);
        assert!(r.passed());
        assert_eq!(r.checks[0].name, "so3/flip");
    }

    #[test]
    fn json_roundtrip() {
        let mut r = Report::new("s");
        r.push(CheckResult::new("c", 3, 4, 1e-13, 1e-12).with_input("x"));
        r.note("k", "v");
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
