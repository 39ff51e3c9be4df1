//! JSON report shared by the numeric checks.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub params: Value,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    /// `pass` is `residual ≤ tolerance`; a NaN residual fails.
    pub fn new(check: impl Into<String>, params: Value, residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            params,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_residual_fails() {
        assert!(!CheckReport::new("x", Value::Null, f64::NAN, 1.0).pass);
        assert!(CheckReport::new("x", Value::Null, 1.0, 1.0).pass);
    }

    #[test]
    fn json_line_fields() {
        let r = CheckReport::new("martingale", serde_json::json!({"q": 0.5}), 1e-12, 1e-8);
        let v: Value = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(v["check"], "martingale");
        assert_eq!(v["params"]["q"], 0.5);
        assert_eq!(v["pass"], true);
    }
}
