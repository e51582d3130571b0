use serde::{Deserialize, Serialize};

/// One comparison between a reference value and the value under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    /// Sample count, replay count or DP size behind the reference.
    pub samples: usize,
    pub reference: f64,
    pub approx: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl OracleReport {
    pub fn new(name: impl Into<String>, samples: usize, reference: f64, approx: f64, tolerance: Tolerance) -> Self {
        let abs_err = (approx - reference).abs();
        let rel_err = if reference != 0.0 {
            abs_err / reference.abs()
        } else if abs_err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let pass = match tolerance {
            Tolerance::Absolute(t) => abs_err <= t,
            Tolerance::Relative(t) => rel_err <= t,
        };
        Self {
            name: name.into(),
            samples,
            reference,
            approx,
            abs_err,
            rel_err,
            tolerance,
            pass,
        }
    }

    pub const CSV_HEADER: &'static str = "name,samples,reference,approx,abs_err,rel_err,tolerance_kind,tolerance,pass";

    pub fn csv_row(&self) -> String {
        let (kind, tol) = match self.tolerance {
            Tolerance::Absolute(t) => ("absolute", t),
            Tolerance::Relative(t) => ("relative", t),
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.name, self.samples, self.reference, self.approx, self.abs_err, self.rel_err, kind, tol, self.pass
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_follow_stored_values() {
        let r = OracleReport::new("x", 1, 2.0, 2.5, Tolerance::Relative(0.2));
        assert_eq!(r.abs_err, 0.5);
        assert_eq!(r.rel_err, 0.25);
        assert!(!r.pass);
        assert!(OracleReport::new("x", 1, 2.0, 2.5, Tolerance::Absolute(0.5)).pass);
        assert_eq!(
            OracleReport::new("z", 1, 0.0, 0.0, Tolerance::Relative(0.1)).rel_err,
            0.0
        );
        assert!(!OracleReport::new("z", 1, 0.0, 1e-9, Tolerance::Relative(0.1)).pass);
    }

    #[test]
    fn csv_row_has_header_arity() {
        let r = OracleReport::new("x", 3, 1.0, 1.0, Tolerance::Absolute(0.1));
        assert_eq!(
            r.csv_row().split(',').count(),
            OracleReport::CSV_HEADER.split(',').count()
        );
    }
}
