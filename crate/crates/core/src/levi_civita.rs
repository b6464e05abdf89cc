//! Levi-Civita geometry of a chart from exact jets of the metric.
//!
//! [`ChartGeometry`] carries every metric-derived field as a Taylor expansion
//! around the base point, so further covariant derivatives are exact. With metric
//! jets of order `o`, the Christoffel symbols have order `o − 1`, the curvature,
//! Ricci tensor and scalar curvature order `o − 2`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::diff::{expand, Taylor, MAX_ORDER};
use crate::dsl::expr::EvalError;
use crate::dsl::spec::ManifoldSpec;
use crate::tensor::{max_abs, MetricFrame, TensorError, TensorValue, Variance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("field has jet order {have}, {need} required")]
    OrderTooLow { have: usize, need: usize },
}

impl GeometryError {
    /// True for singular metrics and evaluation-domain failures.
    pub fn is_numerical_breakdown(&self) -> bool {
        matches!(
            self,
            GeometryError::Eval(_)
                | GeometryError::Tensor(TensorError::SingularMetric { .. })
                | GeometryError::Tensor(TensorError::Eval(_))
        )
    }
}

/// Tensor field given by Taylor-expanded components around a point.
#[derive(Debug, Clone)]
pub struct TensorField {
    pub dim: usize,
    pub slots: Vec<Variance>,
    pub data: Vec<Taylor>,
}

impl TensorField {
    pub fn new(dim: usize, slots: Vec<Variance>, data: Vec<Taylor>) -> Self {
        assert_eq!(data.len(), dim.pow(slots.len() as u32));
        TensorField { dim, slots, data }
    }

    pub fn order(&self) -> usize {
        self.data.iter().map(Taylor::order).min().unwrap_or(0)
    }

    pub fn at_point(&self) -> TensorValue {
        TensorValue::new(
            self.dim,
            self.slots.clone(),
            self.data.iter().map(Taylor::value).collect(),
        )
    }
}

/// `∇T`, with the differentiation slot placed first: `(∇T)[k, a…] = (∇_{e_k} T)[a…]`.
///
/// `gamma[(k*d + i)*d + j] = Γ^k_{ij}`.
pub fn covariant_derivative(field: &TensorField, gamma: &[Taylor]) -> Result<TensorField, GeometryError> {
    let have = field.order();
    if have < 1 {
        return Err(GeometryError::OrderTooLow { have, need: 1 });
    }
    let d = field.dim;
    let rank = field.slots.len();
    let out_order = have - 1;
    let gamma: Vec<Taylor> = gamma.iter().map(|g| g.truncate(out_order)).collect();
    let strides: Vec<usize> = (0..rank).map(|s| d.pow((rank - s - 1) as u32)).collect();
    let len = d.pow(rank as u32);
    let mut data = Vec::with_capacity(d * len);
    for k in 0..d {
        for pos in 0..len {
            let mut acc = field.data[pos].derivative(k);
            for (s, variance) in field.slots.iter().enumerate() {
                let a = (pos / strides[s]) % d;
                let base = pos - a * strides[s];
                for m in 0..d {
                    let other = &field.data[base + m * strides[s]];
                    match variance {
                        Variance::Contravariant => {
                            acc = &acc + &(&gamma[(a * d + k) * d + m] * other);
                        }
                        Variance::Covariant => {
                            acc = &acc - &(&gamma[(m * d + k) * d + a] * other);
                        }
                    }
                }
            }
            data.push(acc);
        }
    }
    let mut slots = vec![Variance::Covariant];
    slots.extend_from_slice(&field.slots);
    Ok(TensorField::new(d, slots, data))
}

fn mat_mul(a: &[Taylor], b: &[Taylor], d: usize) -> Vec<Taylor> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = &a[i * d] * &b[j];
            for m in 1..d {
                acc = &acc + &(&a[i * d + m] * &b[m * d + j]);
            }
            out.push(acc);
        }
    }
    out
}

/// Inverse of a Taylor-valued matrix `G = G₀ + H` as `Σₖ (−G₀⁻¹H)ᵏ G₀⁻¹`.
fn taylor_inverse(g: &[Taylor], g0_inv: &DMatrix<f64>, d: usize) -> Vec<Taylor> {
    let order = g.iter().map(Taylor::order).min().unwrap_or(0);
    let h: Vec<Taylor> = g.iter().map(|t| t.add_scalar(-t.value())).collect();
    // N = -G0^{-1} H
    let mut n = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = h[j].scale(-g0_inv[(i, 0)]);
            for m in 1..d {
                acc = &acc + &h[m * d + j].scale(-g0_inv[(i, m)]);
            }
            n.push(acc);
        }
    }
    let identity = |i: usize, j: usize| h[0].constant_like(if i == j { 1.0 } else { 0.0 });
    // Horner: S = I + N (I + N (I + ...))
    let mut s: Vec<Taylor> = (0..d * d).map(|k| identity(k / d, k % d)).collect();
    for _ in 0..order {
        let ns = mat_mul(&n, &s, d);
        s = ns
            .into_iter()
            .enumerate()
            .map(|(k, t)| t.add_scalar(if k / d == k % d { 1.0 } else { 0.0 }))
            .collect();
    }
    // S · G0^{-1}
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = s[i * d].scale(g0_inv[(0, j)]);
            for m in 1..d {
                acc = &acc + &s[i * d + m].scale(g0_inv[(m, j)]);
            }
            out.push(acc);
        }
    }
    out
}

/// Curvature `R^l_{kij}` of a connection with coefficients `∇_{e_i} e_j = C^k_{ij} e_k`,
/// `coeffs[(k*d + i)*d + j] = C^k_{ij}`; the coefficients need not be symmetric.
pub fn connection_curvature(coeffs: &[Taylor], d: usize) -> Vec<Taylor> {
    let order = coeffs.iter().map(Taylor::order).min().unwrap_or(0);
    assert!(order >= 1, "curvature needs first jets of the connection");
    let r_order = order - 1;
    let low: Vec<Taylor> = coeffs.iter().map(|t| t.truncate(r_order)).collect();
    let ci = |l: usize, i: usize, j: usize| (l * d + i) * d + j;
    let mut riemann: Vec<Option<Taylor>> = vec![None; d * d * d * d];
    for l in 0..d {
        for k in 0..d {
            for i in 0..d {
                for j in (i + 1)..d {
                    let mut acc = &coeffs[ci(l, j, k)].derivative(i) - &coeffs[ci(l, i, k)].derivative(j);
                    for m in 0..d {
                        acc = &acc + &(&low[ci(l, i, m)] * &low[ci(m, j, k)]);
                        acc = &acc - &(&low[ci(l, j, m)] * &low[ci(m, i, k)]);
                    }
                    let idx = ((l * d + k) * d + i) * d + j;
                    let swapped = ((l * d + k) * d + j) * d + i;
                    riemann[swapped] = Some(-&acc);
                    riemann[idx] = Some(acc);
                }
                let diag = ((l * d + k) * d + i) * d + i;
                riemann[diag] = Some(low[0].zero_like());
            }
        }
    }
    riemann.into_iter().map(|t| t.expect("filled")).collect()
}

/// Metric-derived fields of a spec around one chart point.
#[derive(Debug, Clone)]
pub struct ChartGeometry {
    pub dim: usize,
    pub point: Vec<f64>,
    /// Jet order of the metric expansion.
    pub order: usize,
    pub g: Vec<Taylor>,
    pub g_inv: Vec<Taylor>,
    /// `J^i_j` at `[i*d + j]`.
    pub j: Vec<Taylor>,
    /// `Γ^k_{ij}` at `[(k*d + i)*d + j]`.
    pub gamma: Vec<Taylor>,
    /// `R^l_{kij}` at `[((l*d + k)*d + i)*d + j]`; empty when `order < 2`.
    pub riemann: Vec<Taylor>,
    /// `ρ_{ij}`; empty when `order < 2`.
    pub ricci: Vec<Taylor>,
    pub tau: Option<Taylor>,
    pub frame: MetricFrame,
}

impl ChartGeometry {
    pub fn new(spec: &ManifoldSpec, point: &[f64], order: usize) -> Result<Self, GeometryError> {
        assert!((1..=MAX_ORDER).contains(&order));
        if !spec.in_domain(point) {
            return Err(TensorError::OutOfDomain(point.to_vec()).into());
        }
        let d = spec.dim;
        let mut g = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                if j < i {
                    let t: &Taylor = &g[j * d + i];
                    g.push(t.clone());
                } else {
                    let a = expand(&spec.metric[i][j].expr, point, order)?;
                    let t = if i == j {
                        a
                    } else {
                        let b = expand(&spec.metric[j][i].expr, point, order)?;
                        (&a + &b).scale(0.5)
                    };
                    g.push(t);
                }
            }
        }
        let mut j = Vec::with_capacity(d * d);
        for row in &spec.complex_structure {
            for c in row {
                j.push(expand(&c.expr, point, order)?);
            }
        }
        let values = |m: &[Taylor]| DMatrix::from_fn(d, d, |r, c| m[r * d + c].value());
        let frame = MetricFrame::from_matrices(point.to_vec(), values(&g), values(&j))?;
        let g_inv = taylor_inverse(&g, &frame.g_inv, d);

        // Γ_{l,ij} = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
        let dg: Vec<Vec<Taylor>> = (0..d)
            .map(|l| g.iter().map(|t| t.derivative(l)).collect())
            .collect();
        let mut gamma_low = vec![None; d * d * d];
        for l in 0..d {
            for i in 0..d {
                for jj in i..d {
                    let v = (&(&dg[i][jj * d + l] + &dg[jj][i * d + l]) - &dg[l][i * d + jj]).scale(0.5);
                    gamma_low[(l * d + jj) * d + i] = Some(v.clone());
                    gamma_low[(l * d + i) * d + jj] = Some(v);
                }
            }
        }
        let gamma_low: Vec<Taylor> = gamma_low.into_iter().map(|t| t.expect("filled")).collect();
        let mut gamma = Vec::with_capacity(d * d * d);
        for k in 0..d {
            for i in 0..d {
                for jj in 0..d {
                    if jj < i {
                        let t: &Taylor = &gamma[(k * d + jj) * d + i];
                        gamma.push(t.clone());
                        continue;
                    }
                    let mut acc = &g_inv[k * d] * &gamma_low[i * d + jj];
                    for l in 1..d {
                        acc = &acc + &(&g_inv[k * d + l] * &gamma_low[(l * d + i) * d + jj]);
                    }
                    gamma.push(acc);
                }
            }
        }

        let mut geometry = ChartGeometry {
            dim: d,
            point: point.to_vec(),
            order,
            g,
            g_inv,
            j,
            gamma,
            riemann: Vec::new(),
            ricci: Vec::new(),
            tau: None,
            frame,
        };
        if order >= 2 {
            geometry.compute_curvature();
        }
        Ok(geometry)
    }

    fn compute_curvature(&mut self) {
        let d = self.dim;
        let riemann = connection_curvature(&self.gamma, d);
        // ρ(e_j, e_k) = Σ_i R^i_{k i j}
        let mut ricci = Vec::with_capacity(d * d);
        for j in 0..d {
            for k in 0..d {
                let mut acc = riemann[(k * d) * d + j].clone();
                for i in 1..d {
                    acc = &acc + &riemann[((i * d + k) * d + i) * d + j];
                }
                ricci.push(acc);
            }
        }
        let mut tau = &self.g_inv[0] * &ricci[0];
        for p in 1..d * d {
            tau = &tau + &(&self.g_inv[p] * &ricci[p]);
        }
        self.riemann = riemann;
        self.ricci = ricci;
        self.tau = Some(tau);
    }

    pub fn n(&self) -> usize {
        self.dim / 2
    }

    pub fn tau(&self) -> &Taylor {
        self.tau.as_ref().expect("curvature needs metric jets of order ≥ 2")
    }

    pub fn gamma_values(&self) -> TensorValue {
        TensorValue::new(
            self.dim,
            vec![Variance::Contravariant, Variance::Covariant, Variance::Covariant],
            self.gamma.iter().map(Taylor::value).collect(),
        )
    }

    pub fn field(&self, slots: Vec<Variance>, data: Vec<Taylor>) -> TensorField {
        TensorField::new(self.dim, slots, data)
    }

    pub fn ricci_field(&self) -> TensorField {
        self.field(vec![Variance::Covariant; 2], self.ricci.clone())
    }

    pub fn j_field(&self) -> TensorField {
        self.field(
            vec![Variance::Contravariant, Variance::Covariant],
            self.j.clone(),
        )
    }

    pub fn metric_field(&self) -> TensorField {
        self.field(vec![Variance::Covariant; 2], self.g.clone())
    }

    /// `dτ` as a covector field.
    pub fn dtau_field(&self) -> TensorField {
        let tau = self.tau();
        self.field(
            vec![Variance::Covariant],
            (0..self.dim).map(|i| tau.derivative(i)).collect(),
        )
    }

    /// `Ω_{ij} = J^m_i g_{mj}` as a field.
    pub fn kahler_form_field(&self) -> TensorField {
        let d = self.dim;
        let mut data = Vec::with_capacity(d * d);
        for i in 0..d {
            for jj in 0..d {
                let mut acc = &self.j[i] * &self.g[jj];
                for m in 1..d {
                    acc = &acc + &(&self.j[m * d + i] * &self.g[m * d + jj]);
                }
                data.push(acc);
            }
        }
        self.field(vec![Variance::Covariant; 2], data)
    }

    /// Contravariant vector field `g⁻¹ w` for a covector field `w`.
    pub fn raise_field(&self, w: &[Taylor]) -> Vec<Taylor> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let mut acc = &self.g_inv[i * d] * &w[0];
                for m in 1..d {
                    acc = &acc + &(&self.g_inv[i * d + m] * &w[m]);
                }
                acc
            })
            .collect()
    }

    /// `J v` for a Taylor vector field.
    pub fn apply_j_field(&self, v: &[Taylor]) -> Vec<Taylor> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let mut acc = &self.j[i * d] * &v[0];
                for m in 1..d {
                    acc = &acc + &(&self.j[i * d + m] * &v[m]);
                }
                acc
            })
            .collect()
    }
}

/// Levi-Civita quantities at one point.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub point: Vec<f64>,
    pub dim: usize,
    /// `Γ^k_{ij}`.
    pub gamma: Vec<f64>,
    /// `R^l_{kij}`.
    pub riemann: Vec<f64>,
    /// `R_{lkij} = g(R(e_i, e_j)e_k, e_l)`.
    pub riemann_lowered: Vec<f64>,
    pub ricci: Vec<f64>,
    pub tau: f64,
    pub dtau: Vec<f64>,
    pub grad_tau: Vec<f64>,
    /// `(∇_{e_k}ρ)(e_i, e_j)` at `[(k*d + i)*d + j]`.
    pub nabla_rho: Vec<f64>,
    pub laplace_tau: f64,
    pub ricci_norm_sq: f64,
    pub dtau_norm_sq: f64,
}

impl CurvatureBundle {
    pub fn from_geometry(geo: &ChartGeometry) -> Result<Self, GeometryError> {
        if geo.order < 4 {
            return Err(GeometryError::OrderTooLow {
                have: geo.order,
                need: 4,
            });
        }
        let d = geo.dim;
        let f = &geo.frame;
        let riemann: Vec<f64> = geo.riemann.iter().map(Taylor::value).collect();
        let mut riemann_lowered = vec![0.0; d * d * d * d];
        for l in 0..d {
            for rest in 0..d * d * d {
                riemann_lowered[l * d * d * d + rest] =
                    (0..d).map(|m| f.g[(l, m)] * riemann[m * d * d * d + rest]).sum();
            }
        }
        let ricci: Vec<f64> = geo.ricci.iter().map(Taylor::value).collect();
        let tau_t = geo.tau();
        let tau = tau_t.value();
        let dtau: Vec<f64> = (0..d).map(|i| tau_t.d1(i)).collect();
        let grad_tau = f.raise(&dtau);
        let dtau_norm_sq = dtau.iter().zip(&grad_tau).map(|(a, b)| a * b).sum();
        let gamma: Vec<f64> = geo.gamma.iter().map(Taylor::value).collect();
        let nabla_rho = covariant_derivative(&geo.ricci_field(), &geo.gamma)?
            .at_point()
            .data;
        let hess = covariant_derivative(&geo.dtau_field(), &geo.gamma)?.at_point().data;
        let mut laplace_tau = 0.0;
        let mut ricci_norm_sq = 0.0;
        let mut rho_up = vec![0.0; d * d]; // ρ^{ik} g-raised on both slots
        for i in 0..d {
            for k in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    for l in 0..d {
                        s += f.g_inv[(i, j)] * f.g_inv[(k, l)] * ricci[j * d + l];
                    }
                }
                rho_up[i * d + k] = s;
            }
        }
        for i in 0..d {
            for j in 0..d {
                laplace_tau += f.g_inv[(i, j)] * hess[i * d + j];
                ricci_norm_sq += rho_up[i * d + j] * ricci[i * d + j];
            }
        }
        Ok(CurvatureBundle {
            point: geo.point.clone(),
            dim: d,
            gamma,
            riemann,
            riemann_lowered,
            ricci,
            tau,
            dtau,
            grad_tau,
            nabla_rho,
            laplace_tau,
            ricci_norm_sq,
            dtau_norm_sq,
        })
    }

    pub fn riemann_scale(&self) -> f64 {
        max_abs(self.riemann_lowered.iter())
    }
}

/// Christoffel symbols `Γ^k_{ij}` at a point.
pub fn christoffel(spec: &ManifoldSpec, point: &[f64]) -> Result<TensorValue, GeometryError> {
    Ok(ChartGeometry::new(spec, point, 1)?.gamma_values())
}

/// Full curvature bundle at a point (metric jets to order 4).
pub fn curvature_bundle(spec: &ManifoldSpec, point: &[f64]) -> Result<CurvatureBundle, GeometryError> {
    CurvatureBundle::from_geometry(&ChartGeometry::new(spec, point, 4)?)
}

/// Residuals of the Kähler axioms.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct KahlerResiduals {
    pub nabla_j_max: f64,
    pub hermitian_max: f64,
    pub d_omega_max: f64,
}

impl KahlerResiduals {
    pub fn max(&self) -> f64 {
        self.nabla_j_max.max(self.hermitian_max).max(self.d_omega_max)
    }

    fn merge(self, other: KahlerResiduals) -> KahlerResiduals {
        KahlerResiduals {
            nabla_j_max: self.nabla_j_max.max(other.nabla_j_max),
            hermitian_max: self.hermitian_max.max(other.hermitian_max),
            d_omega_max: self.d_omega_max.max(other.d_omega_max),
        }
    }
}

/// Relative Kähler residuals at a single point from a geometry with `order ≥ 1`.
pub fn kahler_residuals_at(geo: &ChartGeometry) -> Result<KahlerResiduals, GeometryError> {
    let d = geo.dim;
    let f = &geo.frame;
    let nabla_j = covariant_derivative(&geo.j_field(), &geo.gamma)?.at_point();
    let dj_scale = (0..d)
        .flat_map(|k| geo.j.iter().map(move |t| t.d1(k).abs()))
        .fold(0.0, f64::max);
    let gamma_scale = max_abs(geo.gamma.iter().map(Taylor::value).collect::<Vec<_>>().iter());
    let j_scale = max_abs(f.j.iter());
    let nabla_j_max = nabla_j.max_abs() / dj_scale.max(gamma_scale * j_scale).max(1.0);

    let herm = f.j.transpose() * &f.g * &f.j - &f.g;
    let hermitian_max = max_abs(herm.iter()) / max_abs(f.g.iter()).max(1.0);

    let omega = geo.kahler_form_field();
    let mut d_omega = 0.0f64;
    let mut d_scale = 0.0f64;
    for i in 0..d {
        for jj in 0..d {
            for k in 0..d {
                let a = omega.data[jj * d + k].d1(i);
                let b = omega.data[k * d + i].d1(jj);
                let c = omega.data[i * d + jj].d1(k);
                d_omega = d_omega.max((a + b + c).abs());
                d_scale = d_scale.max(a.abs());
            }
        }
    }
    Ok(KahlerResiduals {
        nabla_j_max,
        hermitian_max,
        d_omega_max: d_omega / d_scale.max(1.0),
    })
}

/// Worst Kähler residuals over a set of points.
pub fn kahler_residuals(spec: &ManifoldSpec, points: &[Vec<f64>]) -> Result<KahlerResiduals, GeometryError> {
    let mut acc = KahlerResiduals::default();
    for p in points {
        let geo = ChartGeometry::new(spec, p, 1)?;
        acc = acc.merge(kahler_residuals_at(&geo)?);
    }
    Ok(acc)
}
