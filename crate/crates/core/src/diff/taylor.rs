//! Truncated multivariate Taylor polynomials.
//!
//! A [`Taylor`] value stores the normalized coefficients `∂^α f(x₀) / α!` of a
//! function around a base point for every multi-index `α` with `|α| ≤ order`.
//! Arithmetic on these values is exact up to floating-point rounding: products
//! are truncated Cauchy products, and a smooth univariate function `φ` is applied
//! by expanding `φ(a₀ + h) = Σ φ⁽ᵏ⁾(a₀) hᵏ / k!` in the nilpotent part `h`.
//!
//! Monomials are enumerated by total degree first, so the coefficients of a
//! lower-order truncation are a prefix of the higher-order ones.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Highest truncation order supported by the engine.
pub const MAX_ORDER: usize = 5;

/// Monomial tables for a fixed number of variables.
#[derive(Debug)]
pub struct Basis {
    nvars: usize,
    exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    len_by_order: [usize; MAX_ORDER + 1],
    /// `(a, b, a+b)` triples sorted by the degree of `a+b`.
    mul: Vec<(u32, u32, u32)>,
    mul_len_by_order: [usize; MAX_ORDER + 1],
    /// Per variable: `(src, dst, factor)` sorted by the degree of `src`.
    deriv: Vec<Vec<(u32, u32, f64)>>,
    deriv_len_by_order: Vec<[usize; MAX_ORDER + 1]>,
}

fn monomials_of_degree(nvars: usize, degree: usize) -> Vec<Vec<u8>> {
    fn rec(var: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        let nvars = cur.len();
        if var == nvars - 1 {
            cur[var] = left as u8;
            out.push(cur.clone());
            cur[var] = 0;
            return;
        }
        for e in (0..=left).rev() {
            cur[var] = e as u8;
            rec(var + 1, left - e, cur, out);
        }
        cur[var] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u8; nvars];
    rec(0, degree, &mut cur, &mut out);
    out
}

fn degree(e: &[u8]) -> usize {
    e.iter().map(|&v| v as usize).sum()
}

impl Basis {
    fn build(nvars: usize) -> Self {
        assert!(nvars >= 1, "Taylor basis needs at least one variable");
        let mut exps = Vec::new();
        let mut len_by_order = [0usize; MAX_ORDER + 1];
        for d in 0..=MAX_ORDER {
            exps.extend(monomials_of_degree(nvars, d));
            len_by_order[d] = exps.len();
        }
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();

        let mut mul = Vec::new();
        for (a, ea) in exps.iter().enumerate() {
            let da = degree(ea);
            for (b, eb) in exps.iter().enumerate() {
                if da + degree(eb) > MAX_ORDER {
                    continue;
                }
                let sum: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                mul.push((a as u32, b as u32, index[&sum] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, c)| degree(&exps[c as usize]));
        let mut mul_len_by_order = [0usize; MAX_ORDER + 1];
        for (d, slot) in mul_len_by_order.iter_mut().enumerate() {
            *slot = mul
                .iter()
                .take_while(|&&(_, _, c)| degree(&exps[c as usize]) <= d)
                .count();
        }

        let mut deriv = Vec::with_capacity(nvars);
        let mut deriv_len_by_order = Vec::with_capacity(nvars);
        for var in 0..nvars {
            let mut table = Vec::new();
            for (src, e) in exps.iter().enumerate() {
                if e[var] == 0 {
                    continue;
                }
                let mut lowered = e.clone();
                lowered[var] -= 1;
                table.push((src as u32, index[&lowered] as u32, e[var] as f64));
            }
            // exps is graded, so table is already sorted by source degree
            let mut lens = [0usize; MAX_ORDER + 1];
            for (d, slot) in lens.iter_mut().enumerate() {
                *slot = table
                    .iter()
                    .take_while(|&&(s, _, _)| degree(&exps[s as usize]) <= d)
                    .count();
            }
            deriv.push(table);
            deriv_len_by_order.push(lens);
        }

        Basis {
            nvars,
            exps,
            index,
            len_by_order,
            mul,
            mul_len_by_order,
            deriv,
            deriv_len_by_order,
        }
    }

    /// Shared basis for `nvars` variables.
    pub fn for_vars(nvars: usize) -> Arc<Basis> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Basis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("basis cache poisoned");
        guard
            .entry(nvars)
            .or_insert_with(|| Arc::new(Basis::build(nvars)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Number of monomials of total degree `≤ order`.
    pub fn len(&self, order: usize) -> usize {
        self.len_by_order[order]
    }

    pub fn exponents(&self, idx: usize) -> &[u8] {
        &self.exps[idx]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// Error raised when a univariate function is applied outside its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainError {
    pub op: &'static str,
    pub argument: f64,
}

impl std::fmt::Display for DomainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} undefined at argument {:e}", self.op, self.argument)
    }
}

impl std::error::Error for DomainError {}

/// Truncated Taylor expansion of a scalar function of `nvars` variables.
#[derive(Clone)]
pub struct Taylor {
    basis: Arc<Basis>,
    order: usize,
    coeffs: Vec<f64>,
}

impl std::fmt::Debug for Taylor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Taylor")
            .field("nvars", &self.basis.nvars)
            .field("order", &self.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Taylor {
    pub fn constant(nvars: usize, order: usize, value: f64) -> Self {
        assert!(order <= MAX_ORDER, "order {order} exceeds {MAX_ORDER}");
        let basis = Basis::for_vars(nvars);
        let mut coeffs = vec![0.0; basis.len(order)];
        coeffs[0] = value;
        Taylor {
            basis,
            order,
            coeffs,
        }
    }

    /// The coordinate function `x_var` expanded around `value`.
    pub fn variable(nvars: usize, order: usize, var: usize, value: f64) -> Self {
        assert!(var < nvars);
        let mut t = Self::constant(nvars, order, value);
        if order >= 1 {
            // degree-1 monomials follow the constant in the order x_0, x_1, ...
            t.coeffs[1 + var] = 1.0;
        }
        t
    }

    fn with_coeffs(&self, order: usize, coeffs: Vec<f64>) -> Self {
        Taylor {
            basis: self.basis.clone(),
            order,
            coeffs,
        }
    }

    /// A constant sharing this value's basis and order.
    pub fn constant_like(&self, value: f64) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = value;
        self.with_coeffs(self.order, coeffs)
    }

    pub fn zero_like(&self) -> Self {
        self.constant_like(0.0)
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Normalized coefficients `∂^α f / α!` in graded order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// First partial derivative `∂f/∂x_var` at the base point.
    pub fn d1(&self, var: usize) -> f64 {
        assert!(self.order >= 1, "first derivative of an order-0 expansion");
        self.coeffs[1 + var]
    }

    /// The mixed partial `∂^α f` at the base point, or `None` when `|α|`
    /// exceeds the truncation order.
    pub fn partial(&self, alpha: &[u8]) -> Option<f64> {
        if alpha.len() != self.basis.nvars || degree(alpha) > self.order {
            return None;
        }
        let idx = self.basis.index_of(alpha)?;
        let fact: f64 = alpha
            .iter()
            .map(|&a| (1..=a as u32).product::<u32>() as f64)
            .product();
        Some(self.coeffs[idx] * fact)
    }

    pub fn truncate(&self, order: usize) -> Self {
        if order >= self.order {
            return self.clone();
        }
        let len = self.basis.len(order);
        self.with_coeffs(order, self.coeffs[..len].to_vec())
    }

    /// Partial derivative in `var`; the result has order one less.
    ///
    /// Panics on an order-0 expansion.
    pub fn derivative(&self, var: usize) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 expansion");
        let out_order = self.order - 1;
        let mut coeffs = vec![0.0; self.basis.len(out_order)];
        let table = &self.basis.deriv[var];
        let n = self.basis.deriv_len_by_order[var][self.order];
        for &(src, dst, factor) in &table[..n] {
            coeffs[dst as usize] += factor * self.coeffs[src as usize];
        }
        self.with_coeffs(out_order, coeffs)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.with_coeffs(self.order, self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn add_scalar(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += k;
        out
    }

    fn check_compat(&self, other: &Taylor) {
        assert_eq!(
            self.basis.nvars, other.basis.nvars,
            "Taylor operands over different variable counts"
        );
    }

    fn zip(&self, other: &Taylor, f: impl Fn(f64, f64) -> f64) -> Taylor {
        self.check_compat(other);
        let order = self.order.min(other.order);
        let len = self.basis.len(order);
        let coeffs = (0..len).map(|i| f(self.coeffs[i], other.coeffs[i])).collect();
        self.with_coeffs(order, coeffs)
    }

    fn product(&self, other: &Taylor) -> Taylor {
        self.check_compat(other);
        let order = self.order.min(other.order);
        let mut coeffs = vec![0.0; self.basis.len(order)];
        let n = self.basis.mul_len_by_order[order];
        for &(a, b, c) in &self.basis.mul[..n] {
            coeffs[c as usize] += self.coeffs[a as usize] * other.coeffs[b as usize];
        }
        self.with_coeffs(order, coeffs)
    }

    /// `φ(self)` given `derivs[k] = φ⁽ᵏ⁾(a₀)` for `k = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Taylor {
        assert!(derivs.len() > self.order);
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        // Horner in h with Taylor weights φ⁽ᵏ⁾/k!
        let mut fact = [1.0f64; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            fact[k] = fact[k - 1] * k as f64;
        }
        let mut acc = self.constant_like(derivs[self.order] / fact[self.order]);
        for k in (0..self.order).rev() {
            acc = acc.product(&h).add_scalar(derivs[k] / fact[k]);
        }
        acc
    }

    pub fn powf(&self, exponent: f64) -> Result<Taylor, DomainError> {
        Ok(self.compose(&pow_derivs(self.value(), exponent, self.order)?))
    }

    pub fn recip(&self) -> Result<Taylor, DomainError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(DomainError {
                op: "division",
                argument: a,
            });
        }
        self.powf(-1.0)
    }

    pub fn div(&self, other: &Taylor) -> Result<Taylor, DomainError> {
        Ok(self.product(&other.recip()?))
    }

    pub fn exp(&self) -> Taylor {
        let e = self.value().exp();
        self.compose(&vec![e; self.order + 1])
    }

    pub fn ln(&self) -> Result<Taylor, DomainError> {
        Ok(self.compose(&ln_derivs(self.value(), self.order)?))
    }

    pub fn sqrt(&self) -> Result<Taylor, DomainError> {
        let a = self.value();
        if a <= 0.0 {
            return Err(DomainError {
                op: "sqrt",
                argument: a,
            });
        }
        self.powf(0.5)
    }

    pub fn sin(&self) -> Taylor {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Taylor {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order).map(|k| cycle[k % 4]).collect();
        self.compose(&d)
    }

    pub fn tanh(&self) -> Taylor {
        self.compose(&tanh_derivs(self.value(), self.order))
    }
}

/// Value of `a^c` shared by the scalar and Taylor evaluators.
pub fn pow_value(a: f64, c: f64) -> Result<f64, DomainError> {
    if is_small_integer(c) {
        if a == 0.0 && c < 0.0 {
            return Err(DomainError {
                op: "negative power",
                argument: a,
            });
        }
        Ok(a.powi(c as i32))
    } else if a > 0.0 {
        Ok(a.powf(c))
    } else {
        Err(DomainError {
            op: "non-integer power",
            argument: a,
        })
    }
}

fn is_small_integer(c: f64) -> bool {
    c.fract() == 0.0 && c.abs() <= 1024.0
}

/// `dᵏ/daᵏ aᶜ` for `k = 0..=order`.
pub fn pow_derivs(a: f64, c: f64, order: usize) -> Result<Vec<f64>, DomainError> {
    let mut out = Vec::with_capacity(order + 1);
    let mut falling = 1.0;
    for k in 0..=order {
        if falling == 0.0 {
            out.push(0.0);
        } else {
            out.push(falling * pow_value(a, c - k as f64)?);
        }
        falling *= c - k as f64;
    }
    Ok(out)
}

pub fn ln_derivs(a: f64, order: usize) -> Result<Vec<f64>, DomainError> {
    if a <= 0.0 {
        return Err(DomainError {
            op: "ln",
            argument: a,
        });
    }
    let mut out = vec![a.ln()];
    // d^k ln a = (-1)^(k-1) (k-1)! a^-k
    let mut fact = 1.0;
    for k in 1..=order {
        if k > 1 {
            fact *= (k - 1) as f64;
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out.push(sign * fact / a.powi(k as i32));
    }
    Ok(out)
}

/// Derivatives of tanh as polynomials in t = tanh(a): P₀ = t, Pₖ₊₁ = (1 − t²) Pₖ'.
pub fn tanh_derivs(a: f64, order: usize) -> Vec<f64> {
    let t = a.tanh();
    let mut poly = vec![0.0, 1.0];
    let mut out = Vec::with_capacity(order + 1);
    for _ in 0..=order {
        out.push(poly.iter().rev().fold(0.0, |acc, &c| acc * t + c));
        let dpoly: Vec<f64> = poly
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| c * i as f64)
            .collect();
        let mut next = vec![0.0; dpoly.len() + 2];
        for (i, &c) in dpoly.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        poly = next;
    }
    out
}

impl Add for &Taylor {
    type Output = Taylor;
    fn add(self, rhs: &Taylor) -> Taylor {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &Taylor {
    type Output = Taylor;
    fn sub(self, rhs: &Taylor) -> Taylor {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &Taylor {
    type Output = Taylor;
    fn mul(self, rhs: &Taylor) -> Taylor {
        self.product(rhs)
    }
}

impl Neg for &Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        self.scale(-1.0)
    }
}

impl Add for Taylor {
    type Output = Taylor;
    fn add(self, rhs: Taylor) -> Taylor {
        &self + &rhs
    }
}

impl Sub for Taylor {
    type Output = Taylor;
    fn sub(self, rhs: Taylor) -> Taylor {
        &self - &rhs
    }
}

impl Mul for Taylor {
    type Output = Taylor;
    fn mul(self, rhs: Taylor) -> Taylor {
        &self * &rhs
    }
}

impl Neg for Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        self.scale(-1.0)
    }
}

/// Sum of products `Σ aᵢ bᵢ`, or a zero of the given shape when empty.
pub fn dot(a: &[Taylor], b: &[Taylor], like: &Taylor) -> Taylor {
    let mut acc: Option<Taylor> = None;
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        acc = Some(match acc {
            Some(s) => &s + &p,
            None => p,
        });
    }
    acc.unwrap_or_else(|| like.zero_like())
}
