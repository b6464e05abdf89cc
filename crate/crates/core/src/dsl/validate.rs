//! Pointwise validation of the structural axioms of a spec.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::EvalError;
use super::spec::ManifoldSpec;
use crate::tensor::{eval_matrix, max_abs, MAX_CONDITION};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const COMPLEX_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidateError {
    #[error("probe {0:?} lies outside the chart domain")]
    OutOfDomain(Vec<f64>),
    #[error("metric is singular at {point:?} (condition estimate {condition:e})")]
    SingularMetric { point: Vec<f64>, condition: f64 },
    #[error("at {point:?}: {source}")]
    Eval { point: Vec<f64>, source: EvalError },
}

/// Worst residual of one invariant over the probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
    pub worst_point: Option<Vec<f64>>,
}

impl InvariantCheck {
    fn new(name: &str, threshold: f64) -> Self {
        InvariantCheck {
            name: name.to_string(),
            residual: 0.0,
            threshold,
            passed: true,
            worst_point: None,
        }
    }

    fn record(&mut self, residual: f64, point: &[f64]) {
        if residual > self.residual || self.worst_point.is_none() {
            self.residual = residual;
            self.worst_point = Some(point.to_vec());
        }
        if !(residual <= self.threshold) {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub symmetric: InvariantCheck,
    /// Residual is `max(0, −λ_min) / max(1, λ_max)`; fails unless every `λ_min > 0`.
    pub positive_definite: InvariantCheck,
    pub complex_structure: InvariantCheck,
    pub hermitian: InvariantCheck,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn checks(&self) -> [&InvariantCheck; 4] {
        [
            &self.symmetric,
            &self.positive_definite,
            &self.complex_structure,
            &self.hermitian,
        ]
    }

    pub fn max_residual(&self) -> f64 {
        self.checks().iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

pub fn validate_spec(spec: &ManifoldSpec, probes: &[Vec<f64>]) -> Result<ValidationReport, ValidateError> {
    let mut report = ValidationReport {
        probes: probes.len(),
        symmetric: InvariantCheck::new("metric symmetric", SYMMETRY_TOL),
        positive_definite: InvariantCheck::new("metric positive definite", 0.0),
        complex_structure: InvariantCheck::new("J² = −I", COMPLEX_TOL),
        hermitian: InvariantCheck::new("g(JX, JY) = g(X, Y)", HERMITIAN_TOL),
    };
    let n = spec.dim;
    for p in probes {
        if !spec.in_domain(p) {
            return Err(ValidateError::OutOfDomain(p.clone()));
        }
        let eval = |m| {
            eval_matrix(m, p).map_err(|source| ValidateError::Eval {
                point: p.clone(),
                source,
            })
        };
        let g = eval(&spec.metric)?;
        let j = eval(&spec.complex_structure)?;
        let scale = max_abs(g.iter()).max(1.0);

        let asym = &g - g.transpose();
        report.symmetric.record(max_abs(asym.iter()) / scale, p);

        let sym = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let lmax_abs = max_abs(eig.iter());
        let lmin_abs = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let condition = if lmin_abs > 0.0 { lmax_abs / lmin_abs } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(ValidateError::SingularMetric {
                point: p.clone(),
                condition,
            });
        }
        report
            .positive_definite
            .record((-lmin).max(0.0) / lmax_abs.max(1.0), p);
        if lmin <= 0.0 {
            report.positive_definite.passed = false;
        }

        let j2 = &j * &j + DMatrix::<f64>::identity(n, n);
        let jscale = max_abs(j.iter()).powi(2).max(1.0);
        report.complex_structure.record(max_abs(j2.iter()) / jscale, p);

        let herm = j.transpose() * &g * &j - &g;
        report.hermitian.record(max_abs(herm.iter()) / scale, p);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::spec::parse_manifold_spec;

    fn doc(metric: &str, j: &str) -> String {
        format!(
            r#"{{"name":"t","dim":4,"coordinates":["a","b","c","d"],"metric":{metric},
            "complex_structure":{j},"domain":{{"a":[-1,1],"b":[-1,1],"c":[-1,1],"d":[-1,1]}}}}"#
        )
    }

    const ID: &str = r#"[["1","0","0","0"],["0","1","0","0"],["0","0","1","0"],["0","0","0","1"]]"#;
    const STD_J: &str = r#"[["0","-1","0","0"],["1","0","0","0"],["0","0","0","-1"],["0","0","1","0"]]"#;

    #[test]
    fn flat_passes_with_zero_residuals() {
        let s = parse_manifold_spec(&doc(ID, STD_J)).unwrap();
        let r = validate_spec(&s, &[vec![0.1, 0.2, 0.3, 0.4], vec![0.0; 4]]).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_residual(), 0.0);
    }

    #[test]
    fn identity_complex_structure_fails() {
        let s = parse_manifold_spec(&doc(ID, ID)).unwrap();
        let r = validate_spec(&s, &[vec![0.0; 4]]).unwrap();
        assert!(!r.complex_structure.passed);
        assert!(!r.passed());
        assert_eq!(r.complex_structure.residual, 2.0);
    }

    #[test]
    fn indefinite_metric_fails_without_error() {
        let m = r#"[["1","0","0","0"],["0","1","0","0"],["0","0","-1","0"],["0","0","0","-1"]]"#;
        let s = parse_manifold_spec(&doc(m, STD_J)).unwrap();
        let r = validate_spec(&s, &[vec![0.0; 4]]).unwrap();
        assert!(!r.positive_definite.passed);
        assert!(r.positive_definite.residual > 0.0);
    }

    #[test]
    fn probe_outside_domain_is_an_error() {
        let s = parse_manifold_spec(&doc(ID, STD_J)).unwrap();
        assert!(matches!(
            validate_spec(&s, &[vec![2.0, 0.0, 0.0, 0.0]]),
            Err(ValidateError::OutOfDomain(_))
        ));
    }

    #[test]
    fn singular_metric_is_an_error() {
        let m = r#"[["a^2","0","0","0"],["0","1","0","0"],["0","0","1","0"],["0","0","0","1"]]"#;
        let s = parse_manifold_spec(&doc(m, STD_J)).unwrap();
        assert!(matches!(
            validate_spec(&s, &[vec![0.0; 4]]),
            Err(ValidateError::SingularMetric { .. })
        ));
    }
}
