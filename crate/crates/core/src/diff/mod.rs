//! Exact evaluation and partial differentiation of expressions.
//!
//! Derivatives come from truncated Taylor arithmetic ([`taylor::Taylor`]), not
//! from finite differences. The public surface allows total order up to
//! [`MAX_PUBLIC_ORDER`]; the curvature pipelines use the engine directly and may
//! go one order higher for the derivative of the shape function `k`.

pub mod taylor;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dsl::expr::{EvalError, Expr};
pub use taylor::{Taylor, MAX_ORDER};

pub const MAX_PUBLIC_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("derivative order {0} exceeds {MAX_PUBLIC_ORDER}")]
    OrderTooHigh(usize),
    #[error("multi-index has {got} entries, expected {expected}")]
    MultiIndexArity { expected: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Every partial derivative of total degree `≤ order` at one point.
#[derive(Debug, Clone)]
pub struct Jet {
    pub point: Vec<f64>,
    pub order: usize,
    pub table: BTreeMap<Vec<u8>, f64>,
}

impl Jet {
    pub fn get(&self, alpha: &[u8]) -> Option<f64> {
        self.table.get(alpha).copied()
    }

    pub fn value(&self) -> f64 {
        self.table[&vec![0u8; self.point.len()]]
    }
}

pub fn evaluate(f: &Expr, point: &[f64]) -> Result<f64, EvalError> {
    f.evaluate(point)
}

/// Taylor expansion of `f` around `point`, up to the engine's maximum order.
pub fn expand(f: &Expr, point: &[f64], order: usize) -> Result<Taylor, EvalError> {
    assert!(order <= MAX_ORDER);
    let n = f.coordinates().len();
    if point.len() != n {
        return Err(EvalError::Arity {
            expected: n,
            got: point.len(),
        });
    }
    let vars: Vec<Taylor> = (0..n)
        .map(|i| Taylor::variable(n, order, i, point[i]))
        .collect();
    f.evaluate_taylor(&vars)
}

/// `∂^α f` at `point`, exact up to rounding.
pub fn partial_derivative(f: &Expr, alpha: &[u8], point: &[f64]) -> Result<f64, DiffError> {
    let n = f.coordinates().len();
    if alpha.len() != n {
        return Err(DiffError::MultiIndexArity {
            expected: n,
            got: alpha.len(),
        });
    }
    let order: usize = alpha.iter().map(|&a| a as usize).sum();
    if order > MAX_PUBLIC_ORDER {
        return Err(DiffError::OrderTooHigh(order));
    }
    let t = expand(f, point, order)?;
    Ok(t.partial(alpha).expect("multi-index within truncation order"))
}

pub fn jet(f: &Expr, point: &[f64], order: usize) -> Result<Jet, DiffError> {
    if order > MAX_PUBLIC_ORDER {
        return Err(DiffError::OrderTooHigh(order));
    }
    let t = expand(f, point, order)?;
    let basis = t.basis();
    let table = (0..basis.len(order))
        .map(|i| {
            let alpha = basis.exponents(i).to_vec();
            let v = t.partial(&alpha).expect("in range");
            (alpha, v)
        })
        .collect();
    Ok(Jet {
        point: point.to_vec(),
        order,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::expr::parse_expression;

    fn e(text: &str, coords: &[&str]) -> Expr {
        let names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
        parse_expression(text, &names, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn fourth_derivative_of_exponential() {
        let f = e("exp(2*x)", &["x"]);
        assert!((partial_derivative(&f, &[4], &[0.0]).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn generating_function_slope() {
        // p' = p^4 and p(0) = 1
        let f = e("(1 - 3*(t))^(-1/3)", &["t"]);
        assert!((partial_derivative(&f, &[1], &[0.0]).unwrap() - 1.0).abs() < 1e-14);
        let at = -1.0 / 3.0;
        let p = f.evaluate(&[at]).unwrap();
        assert!((p - 0.793_700_525_984_099_7).abs() < 1e-15);
        let dp = partial_derivative(&f, &[1], &[at]).unwrap();
        assert!((dp - p.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn mixed_partial_of_product() {
        let f = e("x*y", &["x", "y"]);
        assert_eq!(partial_derivative(&f, &[1, 1], &[0.3, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn order_limit_enforced() {
        let f = e("x", &["x"]);
        assert_eq!(
            partial_derivative(&f, &[5], &[0.0]),
            Err(DiffError::OrderTooHigh(5))
        );
        assert!(matches!(jet(&f, &[0.0], 5), Err(DiffError::OrderTooHigh(5))));
    }

    #[test]
    fn jet_tables() {
        let j = jet(&e("x^2", &["x"]), &[2.0], 2).unwrap();
        assert_eq!(j.table.len(), 3);
        assert_eq!(j.get(&[0]), Some(4.0));
        assert_eq!(j.get(&[1]), Some(4.0));
        assert_eq!(j.get(&[2]), Some(2.0));

        let c = jet(&e("5", &["x", "y"]), &[1.0, 1.0], 4).unwrap();
        assert_eq!(c.table.len(), 15);
        for (alpha, v) in &c.table {
            let expect = if alpha.iter().all(|&a| a == 0) { 5.0 } else { 0.0 };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn domain_errors_propagate() {
        let f = e("sqrt(x)", &["x"]);
        assert!(matches!(
            partial_derivative(&f, &[1], &[0.0]),
            Err(DiffError::Eval(EvalError::Domain { .. }))
        ));
    }
}
