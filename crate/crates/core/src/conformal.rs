//! The complex conformal connection of a Kähler chart with potential `u`.
//!
//! With `ω = du`, `P = grad u`, the connection is
//!
//! ```text
//! 𝒟_X Y = ∇_X Y + ω(X)Y + ω(Y)X − g(X,Y)P − ω(JX)JY − ω(JY)JX − g(JX,Y)JP
//! ```
//!
//! Its curvature `ℛ` is computed directly from the (non-symmetric) coefficient
//! field, with the same convention as the Levi-Civita curvature. The closed-form
//! expression of `ℛ` through `R`, `∇ω`, `∇P` and `∇JP` is evaluated separately
//! as a cross-check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bochner::kahler_curvature_model;
use crate::diff::{expand, Taylor};
use crate::dsl::spec::ManifoldSpec;
use crate::levi_civita::{connection_curvature, covariant_derivative, ChartGeometry, GeometryError};
use crate::stats::{relative, Summary, Verdict, IDENTITY_TOL};
use crate::tensor::{max_abs, TensorValue, Variance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConformalError {
    #[error("spec has no potential u")]
    MissingPotential,
    #[error("scalar curvature {tau:e} is not negative at {point:?}; −ln(−τ)/2 is undefined")]
    NonNegativeScalarCurvature { tau: f64, point: Vec<f64> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl ConformalError {
    pub fn is_numerical_breakdown(&self) -> bool {
        match self {
            ConformalError::Geometry(g) => g.is_numerical_breakdown(),
            _ => false,
        }
    }
}

/// The spec's potential expanded at the geometry's base point.
pub fn potential_field(spec: &ManifoldSpec, geo: &ChartGeometry) -> Result<Taylor, ConformalError> {
    let u = spec.potential_u.as_ref().ok_or(ConformalError::MissingPotential)?;
    Ok(expand(&u.expr, &geo.point, geo.order).map_err(GeometryError::from)?)
}

/// `u = −½ ln(−τ)` assembled from the jets of `τ`.
pub fn potential_from_tau(geo: &ChartGeometry) -> Result<Taylor, ConformalError> {
    let tau = geo.tau();
    if !(tau.value() < 0.0) {
        return Err(ConformalError::NonNegativeScalarCurvature {
            tau: tau.value(),
            point: geo.point.clone(),
        });
    }
    let ln = (-tau).ln().map_err(|cause| {
        GeometryError::from(crate::dsl::expr::EvalError::Domain {
            subexpr: "ln(-tau)".into(),
            cause,
        })
    })?;
    Ok(ln.scale(-0.5))
}

/// Lee data at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeeData {
    pub u: f64,
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
    /// `X ↦ ω(JX)`.
    pub omega_j: Vec<f64>,
    pub jp: Vec<f64>,
    pub omega_p: f64,
    pub conformal_factor: f64,
    /// Lee form of `(e^{2u}g, J)`, read off from `dΩ̄ = θ ∧ Ω̄`.
    pub lee_form: Vec<f64>,
    /// `max |dΩ̄ − 2ω∧Ω̄|` relative to `max |dΩ̄|`.
    pub lee_residual: f64,
}

/// Taylor fields of the conformal structure around one point.
#[derive(Debug, Clone)]
pub struct ConformalGeometry {
    pub u: Taylor,
    pub omega: Vec<Taylor>,
    pub p: Vec<Taylor>,
    pub omega_j: Vec<Taylor>,
    pub jp: Vec<Taylor>,
    pub omega_p: Taylor,
    /// `𝒟_{e_i} e_j = C^k_{ij} e_k` at `[(k*d + i)*d + j]`.
    pub coeffs: Vec<Taylor>,
}

impl ConformalGeometry {
    /// Needs `geo.order ≥ 2` and `u` of order ≥ 2 for the curvature.
    pub fn new(geo: &ChartGeometry, u: Taylor) -> Self {
        let d = geo.dim;
        let omega: Vec<Taylor> = (0..d).map(|i| u.derivative(i)).collect();
        let p = geo.raise_field(&omega);
        let omega_j: Vec<Taylor> = (0..d)
            .map(|i| {
                let mut acc = &omega[0] * &geo.j[i];
                for a in 1..d {
                    acc = &acc + &(&omega[a] * &geo.j[a * d + i]);
                }
                acc
            })
            .collect();
        let jp = geo.apply_j_field(&p);
        let mut omega_p = &omega[0] * &p[0];
        for a in 1..d {
            omega_p = &omega_p + &(&omega[a] * &p[a]);
        }
        let kahler = geo.kahler_form_field();
        let mut coeffs = Vec::with_capacity(d * d * d);
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut c = &geo.gamma[(k * d + i) * d + j]
                        - &(&(&geo.g[i * d + j] * &p[k]) + &(&kahler.data[i * d + j] * &jp[k]));
                    c = &c - &(&(&omega_j[i] * &geo.j[k * d + j]) + &(&omega_j[j] * &geo.j[k * d + i]));
                    if k == j {
                        c = &c + &omega[i];
                    }
                    if k == i {
                        c = &c + &omega[j];
                    }
                    coeffs.push(c);
                }
            }
        }
        ConformalGeometry {
            u,
            omega,
            p,
            omega_j,
            jp,
            omega_p,
            coeffs,
        }
    }

    pub fn lee_data(&self, geo: &ChartGeometry) -> LeeData {
        let d = geo.dim;
        let factor = self.u.scale(2.0).exp();
        let kahler = geo.kahler_form_field();
        let bar: Vec<Taylor> = kahler.data.iter().map(|o| &factor * o).collect();
        let value = |v: &[Taylor]| v.iter().map(Taylor::value).collect::<Vec<_>>();
        let omega = value(&self.omega);
        let bar_v = value(&bar);
        let mut d_bar = 0.0f64;
        let mut wedge_res = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let db = bar[j * d + k].d1(i) + bar[k * d + i].d1(j) + bar[i * d + j].d1(k);
                    let wedge = 2.0
                        * (omega[i] * bar_v[j * d + k] + omega[j] * bar_v[k * d + i] + omega[k] * bar_v[i * d + j]);
                    d_bar = d_bar.max(db.abs());
                    wedge_res = wedge_res.max((db - wedge).abs());
                }
            }
        }
        // θ_i = dΩ̄_{ijk} Ω̄^{jk} / (2(n−1))
        let n = (d / 2) as f64;
        let bar_inv = DMatrix::from_fn(d, d, |a, b| geo.frame.g_inv[(a, b)] * (-2.0 * self.u.value()).exp());
        let bar_m = DMatrix::from_fn(d, d, |a, b| bar_v[a * d + b]);
        let bar_up = &bar_inv * &bar_m * &bar_inv; // Ω̄^{ab}
        let lee_form = (0..d)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        let db = bar[j * d + k].d1(i) + bar[k * d + i].d1(j) + bar[i * d + j].d1(k);
                        s += db * bar_up[(j, k)];
                    }
                }
                s / (2.0 * (n - 1.0))
            })
            .collect();
        LeeData {
            u: self.u.value(),
            p: value(&self.p),
            omega_j: value(&self.omega_j),
            jp: value(&self.jp),
            omega_p: self.omega_p.value(),
            conformal_factor: factor.value(),
            lee_form,
            lee_residual: relative(wedge_res, d_bar),
            omega,
        }
    }
}

/// Pointwise tensors of the connection.
#[derive(Debug, Clone)]
pub struct ConformalData {
    pub coeffs: TensorValue,
    /// `𝒯^k_{ij} = C^k_{ij} − C^k_{ji}`.
    pub torsion: TensorValue,
    /// `ℛ^l_{kij}`.
    pub curvature: TensorValue,
    /// `L(X,Y) = ω(X)ω(Y) + ω(JX)ω(JY) + ½ω(P)g(X,Y)`.
    pub l: TensorValue,
}

/// Residuals of the defining conditions, relative to the size of the terms involved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DefiningResiduals {
    /// `𝒟J = 0`.
    pub d_j: f64,
    /// `𝒟g + 2ω⊗g = 0`.
    pub d_g: f64,
    /// `𝒯 + 2Ω⊗JP = 0`.
    pub torsion: f64,
    /// `𝒟ḡ = 0`, relative to `e^{2u}`.
    pub d_gbar: f64,
    /// `𝒯 + Ω̄⊗JP̄ = 0`.
    pub torsion_bar: f64,
}

impl DefiningResiduals {
    pub fn max(&self) -> f64 {
        [self.d_j, self.d_g, self.torsion, self.d_gbar, self.torsion_bar]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Residuals of the curvature relations at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelationResiduals {
    /// Direct `ℛ` against its closed-form expression.
    pub curvature_relation: f64,
    /// `(∇_Xω)(Y) + 2ω(JX)ω(JY) + ω(P)g(X,Y)`.
    pub lee_hessian: f64,
    /// `ℛ − (R + K_L)`, only evaluated when `lee_hessian` is below the gate.
    pub reduced_relation: Option<f64>,
    /// `𝒟P`.
    pub d_p: f64,
}

/// All conformal quantities at one point.
#[derive(Debug, Clone)]
pub struct PointConformal {
    pub lee: LeeData,
    pub data: ConformalData,
    pub defining: DefiningResiduals,
    pub relations: RelationResiduals,
    /// `max |ℛ| / max(1, max |R|)`.
    pub curvature_residual: f64,
    pub curvature_max: f64,
}

fn values(v: &[Taylor]) -> Vec<f64> {
    v.iter().map(Taylor::value).collect()
}

/// Evaluates everything at the geometry's base point; `lee_gate` decides whether
/// the reduced curvature relation is meaningful.
pub fn analyze(geo: &ChartGeometry, cg: &ConformalGeometry, lee_gate: f64) -> Result<PointConformal, GeometryError> {
    let d = geo.dim;
    let f = &geo.frame;
    let lee = cg.lee_data(geo);
    let c = values(&cg.coeffs);
    let ci = |k: usize, i: usize, j: usize| c[(k * d + i) * d + j];

    let mut torsion = vec![0.0; d * d * d];
    let mut torsion_res = 0.0f64;
    let mut torsion_bar_res = 0.0f64;
    let factor = lee.conformal_factor;
    // P̄ = ḡ⁻¹(2ω), Ω̄ = e^{2u}Ω
    let p_bar: Vec<f64> = (0..d)
        .map(|a| (0..d).map(|b| f.g_inv[(a, b)] * 2.0 * lee.omega[b]).sum::<f64>() / factor)
        .collect();
    let jp_bar = f.apply_j(&p_bar);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let t = ci(k, i, j) - ci(k, j, i);
                torsion[(k * d + i) * d + j] = t;
                torsion_res = torsion_res.max((t + 2.0 * f.omega[(i, j)] * lee.jp[k]).abs());
                torsion_bar_res = torsion_bar_res.max((t + factor * f.omega[(i, j)] * jp_bar[k]).abs());
            }
        }
    }
    let torsion_scale = max_abs(torsion.iter());

    // 𝒟J, 𝒟g, 𝒟ḡ from first jets.
    let mut d_j = 0.0f64;
    let mut d_j_scale = 0.0f64;
    let mut d_g = 0.0f64;
    let mut d_g_scale = 0.0f64;
    let mut d_gbar = 0.0f64;
    let factor_t = cg.u.scale(2.0).exp();
    for i in 0..d {
        for a in 0..d {
            for b in 0..d {
                let mut dj = geo.j[a * d + b].d1(i);
                let mut dg = geo.g[a * d + b].d1(i);
                let gbar_ab = &factor_t * &geo.g[a * d + b];
                let mut dgbar = gbar_ab.d1(i);
                d_j_scale = d_j_scale.max(dj.abs());
                d_g_scale = d_g_scale.max(dg.abs());
                for m in 0..d {
                    dj += ci(a, i, m) * f.j[(m, b)] - ci(m, i, b) * f.j[(a, m)];
                    dg -= ci(m, i, a) * f.g[(m, b)] + ci(m, i, b) * f.g[(a, m)];
                    dgbar -= factor * (ci(m, i, a) * f.g[(m, b)] + ci(m, i, b) * f.g[(a, m)]);
                }
                d_j = d_j.max(dj.abs());
                d_g = d_g.max((dg + 2.0 * lee.omega[i] * f.g[(a, b)]).abs());
                d_gbar = d_gbar.max(dgbar.abs());
            }
        }
    }
    let coeff_scale = max_abs(c.iter()) * max_abs(f.g.iter()).max(max_abs(f.j.iter()));
    let defining = DefiningResiduals {
        d_j: relative(d_j, d_j_scale.max(coeff_scale)),
        d_g: relative(d_g, d_g_scale.max(coeff_scale)),
        torsion: relative(torsion_res, torsion_scale),
        d_gbar: relative(d_gbar / factor, d_g_scale.max(coeff_scale)),
        torsion_bar: relative(torsion_bar_res, torsion_scale),
    };

    // Direct curvature of 𝒟.
    let curv: Vec<f64> = values(&connection_curvature(&cg.coeffs, d));
    let riemann: Vec<f64> = values(&geo.riemann);
    let r_scale = max_abs(riemann.iter());
    let curvature_max = max_abs(curv.iter());

    // ∇ω, ∇P, ∇JP.
    let omega_field = geo.field(vec![Variance::Covariant], cg.omega.clone());
    let h = covariant_derivative(&omega_field, &geo.gamma)?.at_point().data;
    let np = covariant_derivative(&geo.field(vec![Variance::Contravariant], cg.p.clone()), &geo.gamma)?
        .at_point()
        .data;
    let njp = covariant_derivative(&geo.field(vec![Variance::Contravariant], cg.jp.clone()), &geo.gamma)?
        .at_point()
        .data;
    let w = &lee.omega.clone();
    let wj = &lee.omega_j.clone();
    let p = &lee.p.clone();
    let jp = &lee.jp.clone();
    let wp = lee.omega_p;
    let g = &f.g;
    let jm = &f.j;
    let gj = g * jm; // g(e_a, Je_b)
    let hj = DMatrix::from_fn(d, d, |a, b| (0..d).map(|m| h[a * d + m] * jm[(m, b)]).sum::<f64>());

    let mut curvature_relation = 0.0f64;
    let mut v = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let cy = h[j * d + k] - w[j] * w[k] + wj[j] * wj[k] + 0.5 * wp * g[(j, k)];
                let cx = h[i * d + k] - w[i] * w[k] + wj[i] * wj[k] + 0.5 * wp * g[(i, k)];
                let ey = hj[(j, k)] - w[j] * wj[k] - wj[j] * w[k] + 0.5 * wp * gj[(j, k)];
                let ex = hj[(i, k)] - w[i] * wj[k] - wj[i] * w[k] + 0.5 * wp * gj[(i, k)];
                for (l, vl) in v.iter_mut().enumerate() {
                    let e = |a: usize| if a == l { 1.0 } else { 0.0 };
                    let mut s = riemann[((l * d + k) * d + i) * d + j];
                    s -= cy * e(i);
                    s += cx * e(j);
                    s -= g[(j, k)] * (np[i * d + l] - w[i] * p[l] - wj[i] * jp[l] + 0.5 * wp * e(i));
                    s += g[(i, k)] * (np[j * d + l] - w[j] * p[l] - wj[j] * jp[l] + 0.5 * wp * e(j));
                    s += ey * jm[(l, i)];
                    s -= ex * jm[(l, j)];
                    s += gj[(j, k)] * (njp[i * d + l] - w[i] * jp[l] + wj[i] * p[l] + 0.5 * wp * jm[(l, i)]);
                    s -= gj[(i, k)] * (njp[j * d + l] - w[j] * jp[l] + wj[j] * p[l] + 0.5 * wp * jm[(l, j)]);
                    s += (-hj[(i, j)] + hj[(j, i)]) * jm[(l, k)];
                    s += 2.0 * gj[(i, j)] * (wj[k] * p[l] + w[k] * jp[l]);
                    *vl = s;
                }
                for l in 0..d {
                    let direct = curv[((l * d + k) * d + i) * d + j];
                    curvature_relation = curvature_relation.max((direct - v[l]).abs());
                }
            }
        }
    }
    let curvature_relation = relative(curvature_relation, r_scale.max(curvature_max));

    let mut hess = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            hess = hess.max((h[a * d + b] + 2.0 * wj[a] * wj[b] + wp * g[(a, b)]).abs());
        }
    }
    let lee_hessian = relative(hess, max_abs(h.iter()));

    let l_mat = DMatrix::from_fn(d, d, |a, b| w[a] * w[b] + wj[a] * wj[b] + 0.5 * wp * g[(a, b)]);
    let reduced_relation = (lee_hessian < lee_gate).then(|| {
        let model = kahler_curvature_model(f, &l_mat);
        let mut worst = 0.0f64;
        for l in 0..d {
            for rest in 0..d * d * d {
                let lowered_direct: f64 = (0..d).map(|m| g[(l, m)] * curv[m * d * d * d + rest]).sum();
                let lowered_r = geo_lowered(g, &riemann, l, rest, d);
                worst = worst.max((lowered_direct - lowered_r - model[l * d * d * d + rest]).abs());
            }
        }
        relative(worst, r_scale * max_abs(g.iter()))
    });

    // 𝒟P = ∂P + C P
    let mut dp = 0.0f64;
    let mut dp_scale = 0.0f64;
    for a in 0..d {
        for l in 0..d {
            let partial = cg.p[l].d1(a);
            let mut s = partial;
            for m in 0..d {
                s += ci(l, a, m) * p[m];
            }
            dp = dp.max(s.abs());
            dp_scale = dp_scale.max(partial.abs());
        }
    }

    let data = ConformalData {
        coeffs: TensorValue::new(
            d,
            vec![Variance::Contravariant, Variance::Covariant, Variance::Covariant],
            c.clone(),
        ),
        torsion: TensorValue::new(
            d,
            vec![Variance::Contravariant, Variance::Covariant, Variance::Covariant],
            torsion,
        ),
        curvature: TensorValue::new(
            d,
            vec![
                Variance::Contravariant,
                Variance::Covariant,
                Variance::Covariant,
                Variance::Covariant,
            ],
            curv,
        ),
        l: TensorValue::from_matrix(&l_mat, [Variance::Covariant; 2]),
    };
    Ok(PointConformal {
        lee,
        data,
        defining,
        relations: RelationResiduals {
            curvature_relation,
            lee_hessian,
            reduced_relation,
            d_p: relative(dp, dp_scale.max(max_abs(c.iter()) * max_abs(p.iter()))),
        },
        curvature_residual: relative(curvature_max, r_scale),
        curvature_max,
    })
}

fn geo_lowered(g: &DMatrix<f64>, riemann: &[f64], l: usize, rest: usize, d: usize) -> f64 {
    (0..d).map(|m| g[(l, m)] * riemann[m * d * d * d + rest]).sum()
}

/// Geometry (metric jets of order 3) and conformal fields for the spec's potential.
pub fn conformal_at(spec: &ManifoldSpec, point: &[f64]) -> Result<(ChartGeometry, ConformalGeometry), ConformalError> {
    if spec.potential_u.is_none() {
        return Err(ConformalError::MissingPotential);
    }
    let geo = ChartGeometry::new(spec, point, 3)?;
    let u = potential_field(spec, &geo)?;
    let cg = ConformalGeometry::new(&geo, u);
    Ok((geo, cg))
}

pub fn lee_data(spec: &ManifoldSpec, point: &[f64]) -> Result<LeeData, ConformalError> {
    let (geo, cg) = conformal_at(spec, point)?;
    Ok(cg.lee_data(&geo))
}

pub fn ccc_coefficients(spec: &ManifoldSpec, point: &[f64]) -> Result<TensorValue, ConformalError> {
    let (_, cg) = conformal_at(spec, point)?;
    let d = spec.dim;
    Ok(TensorValue::new(
        d,
        vec![Variance::Contravariant, Variance::Covariant, Variance::Covariant],
        values(&cg.coeffs),
    ))
}

pub fn defining_condition_residuals(spec: &ManifoldSpec, point: &[f64]) -> Result<DefiningResiduals, ConformalError> {
    let (geo, cg) = conformal_at(spec, point)?;
    Ok(analyze(&geo, &cg, IDENTITY_TOL)?.defining)
}

pub fn ccc_curvature(spec: &ManifoldSpec, point: &[f64]) -> Result<TensorValue, ConformalError> {
    let (geo, cg) = conformal_at(spec, point)?;
    Ok(analyze(&geo, &cg, IDENTITY_TOL)?.data.curvature)
}

pub fn relation_residuals(spec: &ManifoldSpec, point: &[f64]) -> Result<RelationResiduals, ConformalError> {
    let (geo, cg) = conformal_at(spec, point)?;
    Ok(analyze(&geo, &cg, IDENTITY_TOL)?.relations)
}

/// Flatness of `𝒟` over a point set, with the Lee-form Hessian residual alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessOutcome {
    pub verdict: Verdict,
    pub curvature: Summary,
    pub lee_hessian: Summary,
}

pub fn flatness_verdict(spec: &ManifoldSpec, points: &[Vec<f64>], tol: f64) -> Result<FlatnessOutcome, ConformalError> {
    let mut curv = Vec::with_capacity(points.len());
    let mut lee = Vec::with_capacity(points.len());
    for p in points {
        let (geo, cg) = conformal_at(spec, p)?;
        let a = analyze(&geo, &cg, tol)?;
        curv.push(a.curvature_residual);
        lee.push(a.relations.lee_hessian);
    }
    let curvature = Summary::of(&curv);
    Ok(FlatnessOutcome {
        verdict: Verdict::from_pass(curvature.within(tol)),
        curvature,
        lee_hessian: Summary::of(&lee),
    })
}
