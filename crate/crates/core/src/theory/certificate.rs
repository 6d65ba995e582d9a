use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// Passes when `value <= tolerance`.
    AtMost,
    /// Passes when `value >= tolerance`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl Residual {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Residual { name: name.into(), value, tolerance, bound: Bound::AtMost }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Residual { name: name.into(), value, tolerance, bound: Bound::AtLeast }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.value <= self.tolerance,
            Bound::AtLeast => self.value >= self.tolerance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Numerical verdict for one instance of a structural result.
///
/// Wall-clock time is deliberately absent so certificates are reproducible
/// byte for byte; callers record timings separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCertificate {
    pub lemma: String,
    pub input: BTreeMap<String, serde_json::Value>,
    pub residuals: Vec<Residual>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TheoryCertificate {
    pub fn new(lemma: &str, input: BTreeMap<String, serde_json::Value>, residuals: Vec<Residual>) -> Self {
        let verdict = if residuals.iter().all(Residual::passed) { Verdict::Pass } else { Verdict::Fail };
        TheoryCertificate { lemma: lemma.into(), input, residuals, verdict, note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.value)
    }
}

/// Builds the `input` map of a certificate.
#[macro_export]
macro_rules! cert_input {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = ::std::collections::BTreeMap::new();
        $( m.insert($k.to_string(), ::serde_json::json!($v)); )*
        m
    }};
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_requires_every_residual() {
        let c = TheoryCertificate::new("x", BTreeMap::new(), vec![
            Residual::at_most("a", 1e-9, 1e-8),
            Residual::at_least("b", 0.5, 1e-3),
        ]);
        assert!(c.passed());
        let c = TheoryCertificate::new("x", BTreeMap::new(), vec![
            Residual::at_most("a", 1e-7, 1e-8),
            Residual::at_least("b", 0.5, 1e-3),
        ]);
        assert!(!c.passed());
        let nan = TheoryCertificate::new("x", BTreeMap::new(), vec![Residual::at_most("a", f64::NAN, 1.0)]);
        assert!(!nan.passed());
    }
}
