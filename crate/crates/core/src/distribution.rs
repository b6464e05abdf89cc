//! The scalar distribution of a Bochner-Kähler chart and the two-way
//! certification of flat complex conformal connections.
//!
//! Where `dτ ≠ 0`, `ξ = grad τ/‖dτ‖` and `Jξ` span the complement of the scalar
//! distribution `D_τ`. The distribution is of type B₀ when
//!
//! ```text
//! ∇_X ξ = (k/2){X − η(X)ξ + η(JX)Jξ} + p* η(JX)Jξ,   dk = ξ(k)η,   p* = −(ξ(k) + k²)/k
//! ```
//!
//! with `k ≠ 0`. The curvature then decomposes as `R = aπ + bΦ`, and the
//! certifiers check that a flat complex conformal connection exists exactly when
//! `a + k² = 0` and the Bochner constant and `b₀ = (2a − b)/2` vanish.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bochner::bochner_data;
use crate::conformal::{analyze, potential_field, potential_from_tau, ConformalError, ConformalGeometry};
use crate::diff::Taylor;
use crate::dsl::spec::ManifoldSpec;
use crate::levi_civita::{covariant_derivative, ChartGeometry, CurvatureBundle, GeometryError};
use crate::stats::{relative, CheckResult, ConstantResult, Tolerances, Verdict};
use crate::tensor::{max_abs, MetricFrame, Variance};

/// Relative floor on `‖dτ‖` below which the scalar frame is undefined.
pub const DTAU_FLOOR: f64 = 1e-8;
/// Relative floor on `|k|`.
pub const K_FLOOR: f64 = 1e-10;

pub const NO_SCALAR_DISTRIBUTION: &str = "dτ = 0: no scalar distribution";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("‖dτ‖ = {norm:e} is below {threshold:e} at {point:?}")]
    DegenerateScalarField { norm: f64, threshold: f64, point: Vec<f64> },
    #[error("k = {k:e} vanishes at {point:?}")]
    VanishingK { k: f64, point: Vec<f64> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
}

impl DistributionError {
    pub fn is_numerical_breakdown(&self) -> bool {
        match self {
            DistributionError::Geometry(g) => g.is_numerical_breakdown(),
            DistributionError::Conformal(c) => c.is_numerical_breakdown(),
            _ => false,
        }
    }
}

/// `ξ`, `η = g(ξ, ·)` and `Jξ` at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFrame {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub jxi: Vec<f64>,
}

fn degenerate_threshold(tau: f64) -> f64 {
    DTAU_FLOOR * tau.abs().max(1.0)
}

pub fn scalar_frame(bundle: &CurvatureBundle, frame: &MetricFrame) -> Result<ScalarFrame, DistributionError> {
    let norm = bundle.dtau_norm_sq.max(0.0).sqrt();
    let threshold = degenerate_threshold(bundle.tau);
    if !(norm > threshold) {
        return Err(DistributionError::DegenerateScalarField {
            norm,
            threshold,
            point: bundle.point.clone(),
        });
    }
    let xi: Vec<f64> = bundle.grad_tau.iter().map(|v| v / norm).collect();
    Ok(ScalarFrame {
        eta: frame.lower(&xi),
        jxi: frame.apply_j(&xi),
        xi,
    })
}

/// The shape operator `A X = ∇_X ξ` and the functions read off from it.
#[derive(Debug, Clone)]
pub struct ShapeData {
    pub frame: ScalarFrame,
    /// `(∇_{e_k} ξ)^i` at `[k*d + i]`.
    pub nabla_xi: Vec<f64>,
    /// `k = (2/(2n−2)) · trace of A on D_τ`.
    pub k: f64,
    /// `p* = −g(Jξ, A Jξ)`.
    pub p_star: f64,
    /// Deviation of `A` from the B₀ form, relative to `max(1, max |A|)`.
    pub ansatz: f64,
    /// `dk` and `ξ(k)`, available when the metric jets reach order 5.
    pub dk: Option<Vec<f64>>,
    pub xi_k: Option<f64>,
}

impl ShapeData {
    pub fn from_geometry(geo: &ChartGeometry) -> Result<Self, DistributionError> {
        if geo.order < 4 {
            return Err(GeometryError::OrderTooLow {
                have: geo.order,
                need: 4,
            }
            .into());
        }
        let d = geo.dim;
        let n = (d / 2) as f64;
        let tau = geo.tau();
        let dtau: Vec<Taylor> = (0..d).map(|i| tau.derivative(i)).collect();
        let grad = geo.raise_field(&dtau);
        let mut norm_sq = &dtau[0] * &grad[0];
        for i in 1..d {
            norm_sq = &norm_sq + &(&dtau[i] * &grad[i]);
        }
        let norm = norm_sq.value().max(0.0).sqrt();
        let threshold = degenerate_threshold(tau.value());
        if !(norm > threshold) {
            return Err(DistributionError::DegenerateScalarField {
                norm,
                threshold,
                point: geo.point.clone(),
            });
        }
        let inv_norm = norm_sq.powf(-0.5).map_err(|cause| {
            GeometryError::from(crate::dsl::expr::EvalError::Domain {
                subexpr: "‖dτ‖".into(),
                cause,
            })
        })?;
        let xi: Vec<Taylor> = grad.iter().map(|g| g * &inv_norm).collect();
        let a = covariant_derivative(&geo.field(vec![Variance::Contravariant], xi.clone()), &geo.gamma)?;
        let lower = |v: &[Taylor]| -> Vec<Taylor> {
            (0..d)
                .map(|i| {
                    let mut acc = &geo.g[i * d] * &v[0];
                    for m in 1..d {
                        acc = &acc + &(&geo.g[i * d + m] * &v[m]);
                    }
                    acc
                })
                .collect()
        };
        let eta = lower(&xi);
        let jxi = geo.apply_j_field(&xi);
        let jxi_low = lower(&jxi);
        // g(v_low, A w) = Σ v_low_i A^i_k w^k
        let pair = |v_low: &[Taylor], w: &[Taylor]| -> Taylor {
            let mut acc = a.data[0].zero_like();
            for k in 0..d {
                for i in 0..d {
                    acc = &acc + &(&(&v_low[i] * &a.data[k * d + i]) * &w[k]);
                }
            }
            acc
        };
        let mut trace = a.data[0].clone();
        for k in 1..d {
            trace = &trace + &a.data[k * d + k];
        }
        let along_xi = pair(&eta, &xi);
        let along_jxi = pair(&jxi_low, &jxi);
        let k_field = (&(&trace - &along_xi) - &along_jxi).scale(1.0 / (n - 1.0));
        let k = k_field.value();
        let p_star = -along_jxi.value();
        if k.abs() < K_FLOOR * tau.value().abs().max(1.0) {
            return Err(DistributionError::VanishingK {
                k,
                point: geo.point.clone(),
            });
        }

        let val = |v: &[Taylor]| v.iter().map(Taylor::value).collect::<Vec<f64>>();
        let frame = ScalarFrame {
            xi: val(&xi),
            eta: val(&eta),
            jxi: val(&jxi),
        };
        let nabla_xi = a.at_point().data;
        let jm = &geo.frame.j;
        let eta_j: Vec<f64> = (0..d).map(|x| (0..d).map(|m| frame.eta[m] * jm[(m, x)]).sum()).collect();
        let mut worst = 0.0f64;
        for x in 0..d {
            for i in 0..d {
                let e = if i == x { 1.0 } else { 0.0 };
                let model = 0.5 * k * (e - frame.eta[x] * frame.xi[i] + eta_j[x] * frame.jxi[i])
                    + p_star * eta_j[x] * frame.jxi[i];
                worst = worst.max((nabla_xi[x * d + i] - model).abs());
            }
        }
        let ansatz = relative(worst, max_abs(nabla_xi.iter()));
        let (dk, xi_k) = if k_field.order() >= 1 {
            let dk: Vec<f64> = (0..d).map(|i| k_field.d1(i)).collect();
            let xi_k = dk.iter().zip(&frame.xi).map(|(a, b)| a * b).sum();
            (Some(dk), Some(xi_k))
        } else {
            (None, None)
        };
        Ok(ShapeData {
            frame,
            nabla_xi,
            k,
            p_star,
            ansatz,
            dk,
            xi_k,
        })
    }

    /// `max |dk − ξ(k)η|` relative to `max(1, max |dk|)`.
    pub fn dk_collinearity(&self) -> Option<f64> {
        let dk = self.dk.as_ref()?;
        let xk = self.xi_k?;
        let worst = dk
            .iter()
            .zip(&self.frame.eta)
            .map(|(a, e)| (a - xk * e).abs())
            .fold(0.0, f64::max);
        Some(relative(worst, max_abs(dk.iter())))
    }

    /// `|p* + (ξ(k) + k²)/k|` relative to `max(1, |p*|)`.
    pub fn p_star_formula(&self) -> Option<f64> {
        let xk = self.xi_k?;
        Some(relative(self.p_star + (xk + self.k * self.k) / self.k, self.p_star))
    }
}

/// B₀ residuals at one point, from metric jets of order 5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B0Residuals {
    pub k: f64,
    pub p_star: f64,
    pub ansatz: f64,
    pub dk_collinearity: f64,
    pub p_star_formula: f64,
}

pub fn b0_residuals(spec: &ManifoldSpec, point: &[f64]) -> Result<B0Residuals, DistributionError> {
    let geo = ChartGeometry::new(spec, point, 5)?;
    let s = ShapeData::from_geometry(&geo)?;
    Ok(B0Residuals {
        k: s.k,
        p_star: s.p_star,
        ansatz: s.ansatz,
        dk_collinearity: s.dk_collinearity().expect("order-5 jets"),
        p_star_formula: s.p_star_formula().expect("order-5 jets"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricFunctions {
    pub a: f64,
    pub b: f64,
    pub frak_b0: f64,
    pub a_plus_k2: Option<f64>,
}

/// `b₀ = (2a − b)/2`.
pub fn frak_b0(a: f64, b: f64) -> f64 {
    (2.0 * a - b) / 2.0
}

/// `a = τ/((n+1)(n+2)) + 2b₀/(n+2)`, `b = 2τ/((n+1)(n+2)) − 2nb₀/(n+2)`.
pub fn geometric_functions(tau: f64, n: usize, b0: f64, k: Option<f64>) -> GeometricFunctions {
    let n = n as f64;
    let nn = (n + 1.0) * (n + 2.0);
    let a = tau / nn + 2.0 * b0 / (n + 2.0);
    let b = 2.0 * tau / nn - 2.0 * n * b0 / (n + 2.0);
    GeometricFunctions {
        a,
        b,
        frak_b0: frak_b0(a, b),
        a_plus_k2: k.map(|k| a + k * k),
    }
}

/// Class of a B₀ manifold by the sign of `a + k²`.
pub fn class_label(a_plus_k2: f64, tol: f64) -> &'static str {
    if a_plus_k2.abs() <= tol {
        "zero"
    } else if a_plus_k2 > 0.0 {
        "positive"
    } else {
        "negative"
    }
}

/// `π` lowered in slot order `[l, k, i, j]`, from
/// `4π(X,Y)Z = g(Y,Z)X − g(X,Z)Y − 2g(JX,Y)JZ + g(JY,Z)JX − g(JX,Z)JY`.
pub fn pi_tensor(frame: &MetricFrame) -> Vec<f64> {
    let g = &frame.g;
    let j = &frame.j;
    let om = &frame.omega;
    lowered_from(frame, |i, jj, k, a| {
        let e = |b: usize| if a == b { 1.0 } else { 0.0 };
        0.25 * (g[(jj, k)] * e(i) - g[(i, k)] * e(jj) - 2.0 * om[(i, jj)] * j[(a, k)] + om[(jj, k)] * j[(a, i)]
            - om[(i, k)] * j[(a, jj)])
    })
}

/// `Φ` lowered in slot order `[l, k, i, j]` for the frame `(ξ, η, Jξ)`.
pub fn phi_tensor(frame: &MetricFrame, sf: &ScalarFrame) -> Vec<f64> {
    let d = frame.dim();
    let g = &frame.g;
    let j = &frame.j;
    let om = &frame.omega;
    let eta = &sf.eta;
    let xi = &sf.xi;
    let jxi = &sf.jxi;
    let eta_j: Vec<f64> = (0..d).map(|x| (0..d).map(|m| eta[m] * j[(m, x)]).sum()).collect();
    lowered_from(frame, |x, y, z, a| {
        let e = |b: usize| if a == b { 1.0 } else { 0.0 };
        let mut s = g[(y, z)] * (eta[x] * xi[a] - eta_j[x] * jxi[a]);
        s -= g[(x, z)] * (eta[y] * xi[a] - eta_j[y] * jxi[a]);
        s += om[(y, z)] * (eta[x] * jxi[a] + eta_j[x] * xi[a]);
        s -= om[(x, z)] * (eta[y] * jxi[a] + eta_j[y] * xi[a]);
        s -= 2.0 * om[(x, y)] * (eta[z] * jxi[a] + eta_j[z] * xi[a]);
        s += (eta[y] * eta[z] + eta_j[y] * eta_j[z]) * e(x);
        s -= (eta[x] * eta[z] + eta_j[x] * eta_j[z]) * e(y);
        s -= (eta[y] * eta_j[z] - eta_j[y] * eta[z]) * j[(a, x)];
        s += (eta[x] * eta_j[z] - eta_j[x] * eta[z]) * j[(a, y)];
        s += 2.0 * (eta[x] * eta_j[y] - eta_j[x] * eta[y]) * j[(a, z)];
        s / 8.0
    })
}

/// Lowers a vector-valued trilinear expression `F(e_i, e_j, e_k)^a` into `[l, k, i, j]` order.
fn lowered_from(frame: &MetricFrame, f: impl Fn(usize, usize, usize, usize) -> f64) -> Vec<f64> {
    let d = frame.dim();
    let mut out = vec![0.0; d * d * d * d];
    let mut v = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for (a, va) in v.iter_mut().enumerate() {
                    *va = f(i, j, k, a);
                }
                for l in 0..d {
                    out[((l * d + k) * d + i) * d + j] = (0..d).map(|a| frame.g[(l, a)] * v[a]).sum();
                }
            }
        }
    }
    out
}

/// Least-squares fit `R ≈ aπ + bΦ` over all components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFit {
    pub a: f64,
    /// `None` for the `π`-only fit used when `Φ` is undefined.
    pub b: Option<f64>,
    /// `max |R − aπ − bΦ|` relative to `max(1, max |R|)`.
    pub residual: f64,
}

pub fn fit_decomposition(bundle: &CurvatureBundle, frame: &MetricFrame, sf: Option<&ScalarFrame>) -> DecompositionFit {
    let r = &bundle.riemann_lowered;
    let pi = pi_tensor(frame);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let (a, b, model): (f64, Option<f64>, Vec<f64>) = match sf {
        Some(sf) => {
            let phi = phi_tensor(frame, sf);
            let m = Matrix2::new(dot(&pi, &pi), dot(&pi, &phi), dot(&pi, &phi), dot(&phi, &phi));
            let rhs = Vector2::new(dot(r, &pi), dot(r, &phi));
            let sol = m.lu().solve(&rhs).unwrap_or_else(|| Vector2::new(f64::NAN, f64::NAN));
            let model = pi.iter().zip(&phi).map(|(p, f)| sol[0] * p + sol[1] * f).collect();
            (sol[0], Some(sol[1]), model)
        }
        None => {
            let a = dot(r, &pi) / dot(&pi, &pi);
            (a, None, pi.iter().map(|p| a * p).collect())
        }
    };
    let worst = r.iter().zip(&model).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    DecompositionFit {
        a,
        b,
        residual: relative(worst, bundle.riemann_scale()),
    }
}

pub fn pi_phi_decomposition_residual(spec: &ManifoldSpec, point: &[f64]) -> Result<DecompositionFit, DistributionError> {
    let geo = ChartGeometry::new(spec, point, 4)?;
    let bundle = CurvatureBundle::from_geometry(&geo)?;
    let sf = scalar_frame(&bundle, &geo.frame)?;
    Ok(fit_decomposition(&bundle, &geo.frame, Some(&sf)))
}

/// Point excluded from a certification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPoint {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub direction: Direction,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub points: usize,
    pub excluded: Vec<ExcludedPoint>,
    pub checks: Vec<CheckResult>,
    pub constants: Vec<ConstantResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

impl TheoremReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<&ConstantResult> {
        self.constants.iter().find(|c| c.name == name)
    }
}

pub const FORWARD_FRAME_CHECKS: &[&str] = &["lee_hessian", "ccc_flatness"];

pub const FORWARD_CHAIN_CHECKS: &[&str] = &[
    "ricci_from_lee",
    "ricci_on_lee_vector",
    "scalar_from_lee_norm",
    "nabla_ricci_from_lee",
    "lee_from_scalar",
    "lee_vector_from_scalar",
    "dtau_norm",
    "xi_along_lee_vector",
    "shape_of_xi",
    "k_value",
    "p_star_value",
    "a_value",
    "b_value",
    "laplace_tau",
    "ricci_norm",
    "curvature_decomposition",
    "tau_negative",
];

pub const INVERSE_CHECKS: &[&str] = &[
    "bochner_flat",
    "nabla_rho_identity",
    "b0_shape",
    "b0_dk_collinear",
    "b0_p_star_formula",
    "curvature_decomposition",
    "tau_negative",
    "k_negative",
    "k_value",
    "p_star_value",
    "dtau_norm",
    "dtau_from_kb",
    "nabla_eta_shape",
    "lee_hessian",
    "ccc_flatness",
];

pub const CONSTANTS: &[&str] = &["bochner_constant", "b0_constant", "a_plus_k2"];

/// Per-point values in the order of the check and constant name lists.
struct PointRecord {
    checks: Vec<f64>,
    constants: Vec<f64>,
}

enum PointOutcome {
    Record(PointRecord),
    /// `dτ` vanishes or `ω = 0`: the point carries no scalar distribution.
    Excluded(String),
}

/// Excluded points with their reasons, the collected records, or the first hard error.
fn run_points<F>(points: &[Vec<f64>], f: F) -> Result<(Vec<ExcludedPoint>, Vec<PointRecord>), DistributionError>
where
    F: Fn(&[f64]) -> Result<PointOutcome, DistributionError> + Sync,
{
    let outcomes: Vec<Result<PointOutcome, DistributionError>> = points.par_iter().map(|p| f(p)).collect();
    let mut excluded = Vec::new();
    let mut records = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o? {
            PointOutcome::Record(r) => records.push(r),
            PointOutcome::Excluded(reason) => excluded.push(ExcludedPoint { index, reason }),
        }
    }
    Ok((excluded, records))
}

fn column(records: &[PointRecord], idx: usize, constants: bool) -> Vec<f64> {
    records
        .iter()
        .map(|r| if constants { r.constants[idx] } else { r.checks[idx] })
        .collect()
}

fn sqrt_ratio(tau: f64, nn: f64) -> f64 {
    (-tau / nn).max(0.0).sqrt()
}

fn normalized_constants(bundle: &CurvatureBundle, fit: &DecompositionFit, k: f64) -> Vec<f64> {
    let tau = bundle.tau;
    let bc = crate::bochner::bochner_constant_of(bundle);
    let b0 = fit.b.map(|b| frak_b0(fit.a, b)).unwrap_or(f64::NAN);
    let apk = fit.a + k * k;
    vec![
        bc / (tau * tau).max(1.0),
        b0 / tau.abs().max(1.0),
        apk / tau.abs().max(1.0),
    ]
}

fn forward_point(spec: &ManifoldSpec, point: &[f64], tol: &Tolerances) -> Result<PointOutcome, DistributionError> {
    let geo = ChartGeometry::new(spec, point, 4)?;
    let d = geo.dim;
    let n = (d / 2) as f64;
    let nn = (n + 1.0) * (n + 2.0);
    let u = potential_field(spec, &geo)?;
    let cg = ConformalGeometry::new(&geo, u);
    let conf = analyze(&geo, &cg, tol.identity("lee_hessian"))?;
    let bundle = CurvatureBundle::from_geometry(&geo)?;
    let lee = &conf.lee;
    let f = &geo.frame;
    let g = &f.g;
    let gj = g * &f.j;
    let w = &lee.omega;
    let wj = &lee.omega_j;
    let wp = lee.omega_p;
    let tau = bundle.tau;
    let mut checks = vec![conf.relations.lee_hessian, conf.curvature_residual];

    let omega_scale = max_abs(w.iter());
    let shape = match ShapeData::from_geometry(&geo) {
        Ok(s) if omega_scale > 0.0 => s,
        Ok(_) => return Ok(PointOutcome::Excluded("ω = 0".into())),
        Err(DistributionError::DegenerateScalarField { .. }) => {
            return Ok(PointOutcome::Excluded(NO_SCALAR_DISTRIBUTION.into()))
        }
        Err(e) => return Err(e),
    };

    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let v = bundle.ricci[a * d + b] + 2.0 * (n + 2.0) * (w[a] * w[b] + wj[a] * wj[b] + wp * g[(a, b)]);
            worst = worst.max(v.abs());
        }
    }
    checks.push(relative(worst, max_abs(bundle.ricci.iter())));

    let rho_p: Vec<f64> = (0..d)
        .map(|a| (0..d).map(|b| bundle.ricci[a * d + b] * lee.p[b]).sum())
        .collect();
    let worst = (0..d)
        .map(|a| (rho_p[a] + 4.0 * (n + 2.0) * wp * w[a]).abs())
        .fold(0.0, f64::max);
    checks.push(relative(worst, max_abs(rho_p.iter())));

    checks.push(relative(tau + 4.0 * nn * wp, tau));

    let mut worst = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                let rhs = 2.0
                    * (n + 2.0)
                    * wp
                    * (2.0 * w[x] * g[(y, z)] + w[y] * g[(x, z)] + w[z] * g[(x, y)] + wj[y] * gj[(x, z)]
                        + wj[z] * gj[(x, y)]);
                worst = worst.max((bundle.nabla_rho[(x * d + y) * d + z] - rhs).abs());
            }
        }
    }
    checks.push(relative(worst, max_abs(bundle.nabla_rho.iter())));

    let worst = (0..d)
        .map(|a| (w[a] + bundle.dtau[a] / (2.0 * tau)).abs())
        .fold(0.0, f64::max);
    checks.push(relative(worst, omega_scale));
    let worst = (0..d)
        .map(|a| (lee.p[a] + bundle.grad_tau[a] / (2.0 * tau)).abs())
        .fold(0.0, f64::max);
    checks.push(relative(worst, max_abs(lee.p.iter())));
    checks.push(relative(
        bundle.dtau_norm_sq + tau.powi(3) / nn,
        bundle.dtau_norm_sq,
    ));

    let sf = &shape.frame;
    let c = 2.0 * (nn / -tau).sqrt();
    let worst = (0..d)
        .map(|a| (sf.xi[a] - c * lee.p[a]).abs())
        .fold(0.0, f64::max);
    checks.push(relative(worst, 1.0));

    let s = sqrt_ratio(tau, nn);
    let jm = &f.j;
    let eta_j: Vec<f64> = (0..d).map(|x| (0..d).map(|m| sf.eta[m] * jm[(m, x)]).sum()).collect();
    let mut worst = 0.0f64;
    for x in 0..d {
        for i in 0..d {
            let e = if i == x { 1.0 } else { 0.0 };
            let model = -0.5 * s * (e - sf.eta[x] * sf.xi[i] - 2.0 * eta_j[x] * sf.jxi[i]);
            worst = worst.max((shape.nabla_xi[x * d + i] - model).abs());
        }
    }
    checks.push(relative(worst, max_abs(shape.nabla_xi.iter())));
    checks.push(relative(shape.k + s, s));
    checks.push(relative(shape.p_star - 1.5 * s, s));

    let fit = fit_decomposition(&bundle, f, Some(sf));
    checks.push(relative(fit.a - tau / nn, tau / nn));
    checks.push(relative(fit.b.unwrap_or(f64::NAN) - 2.0 * tau / nn, 2.0 * tau / nn));
    checks.push(relative(bundle.laplace_tau + tau * tau / (n + 1.0), tau * tau));
    checks.push(relative(
        bundle.ricci_norm_sq - (n + 3.0) * tau * tau / (2.0 * (n + 1.0).powi(2)),
        tau * tau,
    ));
    checks.push(fit.residual);
    checks.push(relative(tau.max(0.0), tau));

    let constants = normalized_constants(&bundle, &fit, shape.k);
    debug_assert_eq!(checks.len(), FORWARD_FRAME_CHECKS.len() + FORWARD_CHAIN_CHECKS.len());
    Ok(PointOutcome::Record(PointRecord {
        checks,
        constants,
    }))
}

fn finish(
    direction: Direction,
    names: &[&str],
    points: usize,
    excluded: Vec<ExcludedPoint>,
    records: &[PointRecord],
    tol: &Tolerances,
) -> TheoremReport {
    let checks: Vec<CheckResult> = names
        .iter()
        .enumerate()
        .map(|(i, name)| CheckResult::from_values(name, &column(records, i, false), tol.identity(name)))
        .collect();
    let constants: Vec<ConstantResult> = CONSTANTS
        .iter()
        .enumerate()
        .map(|(i, name)| ConstantResult::from_values(name, &column(records, i, true), tol.constant(name)))
        .collect();
    let class = (constants[2].count > 0 && constants[2].mean.is_finite())
        .then(|| class_label(constants[2].mean, tol.constant("a_plus_k2")).to_string());
    let all_pass = checks.iter().all(|c| c.verdict == Verdict::Pass)
        && constants.iter().all(|c| c.verdict == Verdict::Pass)
        && excluded.is_empty();
    TheoremReport {
        direction,
        verdict: Verdict::from_pass(all_pass),
        reason: None,
        points,
        excluded,
        checks,
        constants,
        class,
    }
}

/// Forward direction: from a potential whose conformal connection is flat to
/// the curvature characterization.
pub fn certify_forward(
    spec: &ManifoldSpec,
    points: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<TheoremReport, DistributionError> {
    if spec.potential_u.is_none() {
        return Err(ConformalError::MissingPotential.into());
    }
    let (excluded, records) = run_points(points, |p| forward_point(spec, p, tol))?;
    let mut names: Vec<&str> = FORWARD_FRAME_CHECKS.to_vec();
    names.extend_from_slice(FORWARD_CHAIN_CHECKS);
    if records.is_empty() {
        let mut report = finish(Direction::Forward, &names, points.len(), excluded, &records, tol);
        report.verdict = Verdict::NotApplicable;
        report.reason = Some(format!(
            "vacuous: {}",
            report
                .excluded
                .first()
                .map(|e| e.reason.as_str())
                .unwrap_or("no points")
        ));
        for c in &mut report.checks {
            *c = CheckResult::not_applicable(&c.name, c.threshold, "no point with dτ ≠ 0 and ω ≠ 0");
        }
        return Ok(report);
    }
    let mut report = finish(Direction::Forward, &names, points.len(), excluded, &records, tol);
    let flat = report.check("ccc_flatness").map(|c| c.verdict == Verdict::Pass).unwrap_or(false);
    if !flat {
        report.reason = Some("vacuous: the conformal connection is not flat".into());
        for c in &mut report.checks {
            if FORWARD_CHAIN_CHECKS.contains(&c.name.as_str()) {
                *c = CheckResult::not_applicable(&c.name, c.threshold, "connection not flat");
            }
        }
        for c in &mut report.constants {
            c.verdict = Verdict::NotApplicable;
        }
        report.verdict = Verdict::Fail;
    } else if !report.excluded.is_empty() {
        report.reason = Some(format!("{} point(s) excluded", report.excluded.len()));
    }
    Ok(report)
}

fn inverse_point(spec: &ManifoldSpec, point: &[f64], tol: &Tolerances) -> Result<PointOutcome, DistributionError> {
    let geo = ChartGeometry::new(spec, point, 5)?;
    let d = geo.dim;
    let n = (d / 2) as f64;
    let nn = (n + 1.0) * (n + 2.0);
    let bundle = CurvatureBundle::from_geometry(&geo)?;
    let f = &geo.frame;
    let shape = match ShapeData::from_geometry(&geo) {
        Ok(s) => s,
        Err(DistributionError::DegenerateScalarField { .. }) => {
            return Ok(PointOutcome::Excluded(NO_SCALAR_DISTRIBUTION.into()))
        }
        Err(DistributionError::VanishingK { .. }) => return Ok(PointOutcome::Excluded("k = 0".into())),
        Err(e) => return Err(e),
    };
    let tau = bundle.tau;
    let bd = bochner_data(&bundle, f);
    let sf = &shape.frame;
    let fit = fit_decomposition(&bundle, f, Some(sf));
    let s = sqrt_ratio(tau, nn);
    let k = shape.k;

    let mut checks = vec![
        bd.bochner_flat_residual,
        bd.nabla_rho_residual,
        shape.ansatz,
        shape.dk_collinearity().expect("order-5 jets"),
        shape.p_star_formula().expect("order-5 jets"),
        fit.residual,
        relative(tau.max(0.0), tau),
        relative(k.max(0.0), k),
        relative(k + s, s),
        relative(shape.p_star - 1.5 * s, s),
        relative(bundle.dtau_norm_sq + tau.powi(3) / nn, bundle.dtau_norm_sq),
        relative(
            bundle.dtau_norm_sq.sqrt() - nn * k * fit.b.unwrap_or(f64::NAN) / 2.0,
            bundle.dtau_norm_sq.sqrt(),
        ),
    ];

    // (∇_X η)(Y) = g(∇_X ξ, Y)
    let jm = &f.j;
    let eta_j: Vec<f64> = (0..d).map(|x| (0..d).map(|m| sf.eta[m] * jm[(m, x)]).sum()).collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            let lhs: f64 = (0..d).map(|i| f.g[(y, i)] * shape.nabla_xi[x * d + i]).sum();
            let rhs = -0.5 * s * (f.g[(x, y)] - sf.eta[x] * sf.eta[y] + 2.0 * eta_j[x] * eta_j[y]);
            worst = worst.max((lhs - rhs).abs());
            scale = scale.max(lhs.abs());
        }
    }
    checks.push(relative(worst, scale));

    let (lee_hessian, flatness) = if tau < 0.0 {
        let u = potential_from_tau(&geo)?;
        let cg = ConformalGeometry::new(&geo, u);
        let conf = analyze(&geo, &cg, tol.identity("lee_hessian"))?;
        (conf.relations.lee_hessian, conf.curvature_residual)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    checks.push(lee_hessian);
    checks.push(flatness);
    debug_assert_eq!(checks.len(), INVERSE_CHECKS.len());

    let constants = normalized_constants(&bundle, &fit, k);
    Ok(PointOutcome::Record(PointRecord {
        checks,
        constants,
    }))
}

/// Inverse direction: certify the curvature hypotheses on a chart without a
/// potential, then build `u = −½ ln(−τ)` from the jets of `τ` and test flatness.
pub fn certify_inverse(
    spec: &ManifoldSpec,
    points: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<TheoremReport, DistributionError> {
    let (excluded, records) = run_points(points, |p| inverse_point(spec, p, tol))?;
    let mut report = finish(Direction::Inverse, INVERSE_CHECKS, points.len(), excluded, &records, tol);
    let failed = |name: &str| {
        report
            .check(name)
            .map(|c| c.verdict != Verdict::Pass)
            .or_else(|| report.constant(name).map(|c| c.verdict != Verdict::Pass))
            .unwrap_or(true)
    };
    let reason = if let Some(e) = report.excluded.first() {
        Some(e.reason.clone())
    } else if failed("bochner_flat") {
        Some("hypothesis failed: not Bochner-flat".to_string())
    } else if failed("b0_shape") || failed("b0_dk_collinear") || failed("b0_p_star_formula") {
        Some("hypothesis failed: scalar distribution is not of type B0".to_string())
    } else if failed("a_plus_k2") {
        Some("hypothesis failed: a + k² ≠ 0".to_string())
    } else if failed("b0_constant") {
        Some("hypothesis failed: b0 ≠ 0".to_string())
    } else if failed("bochner_constant") {
        Some("hypothesis failed: Bochner constant ≠ 0".to_string())
    } else if failed("tau_negative") {
        Some("hypothesis failed: τ is not negative".to_string())
    } else if report.verdict != Verdict::Pass {
        Some("constructed conformal connection is not flat".to_string())
    } else {
        None
    };
    if records.is_empty() {
        for c in &mut report.checks {
            *c = CheckResult::not_applicable(&c.name, c.threshold, NO_SCALAR_DISTRIBUTION);
        }
        for c in &mut report.constants {
            c.verdict = Verdict::NotApplicable;
        }
        report.verdict = Verdict::Fail;
    }
    report.reason = reason;
    Ok(report)
}

/// `dτ` as seen by the scalar frame: convenience for callers holding a spec.
pub fn scalar_frame_at(spec: &ManifoldSpec, point: &[f64]) -> Result<ScalarFrame, DistributionError> {
    let geo = ChartGeometry::new(spec, point, 4)?;
    let bundle = CurvatureBundle::from_geometry(&geo)?;
    scalar_frame(&bundle, &geo.frame)
}
