//! The tensor `Q`, the Bochner curvature tensor, the `∇ρ` identity of
//! Bochner-Kähler manifolds and the Bochner constant.

use nalgebra::DMatrix;

use crate::dsl::spec::ManifoldSpec;
use crate::levi_civita::{curvature_bundle, CurvatureBundle, GeometryError};
use crate::stats::{relative, Summary, Verdict};
use crate::tensor::{max_abs, MetricFrame, TensorValue, Variance};

pub const BOCHNER_FLAT_TOL: f64 = 1e-7;

/// `Q = ρ/(2(n+2)) − τ g/(8(n+1)(n+2))` as a `(0,2)` tensor and its `(1,1)` form `Q^a_b`.
pub fn q_tensor(bundle: &CurvatureBundle, frame: &MetricFrame) -> (TensorValue, TensorValue) {
    let d = bundle.dim;
    let n = (d / 2) as f64;
    let q = DMatrix::from_fn(d, d, |i, j| {
        bundle.ricci[i * d + j] / (2.0 * (n + 2.0)) - bundle.tau * frame.g[(i, j)] / (8.0 * (n + 1.0) * (n + 2.0))
    });
    let mixed = &frame.g_inv * &q;
    (
        TensorValue::from_matrix(&q, [Variance::Covariant; 2]),
        TensorValue::from_matrix(&mixed, [Variance::Contravariant, Variance::Covariant]),
    )
}

/// The Kähler curvature-type tensor built from a symmetric `(0,2)` tensor `S`:
///
/// ```text
/// K_S(X,Y)Z = S(Y,Z)X − S(X,Z)Y + g(Y,Z)S(X) − g(X,Z)S(Y)
///           + S(JY,Z)JX − S(JX,Z)JY − 2S(JX,Y)JZ
///           + g(JY,Z)JS(X) − g(JX,Z)JS(Y) − 2g(JX,Y)JS(Z)
/// ```
///
/// returned lowered in slot order `[l, k, i, j]` for `X = e_i, Y = e_j, Z = e_k`.
pub fn kahler_curvature_model(frame: &MetricFrame, s: &DMatrix<f64>) -> Vec<f64> {
    let d = frame.dim();
    let g = &frame.g;
    let j = &frame.j;
    let s_up = &frame.g_inv * s; // column b is S(e_b)
    let js_up = j * &s_up;
    let jt_s = j.transpose() * s; // S(Je_a, e_b)
    let omega = &frame.omega; // g(Je_a, e_b)
    let mut out = vec![0.0; d * d * d * d];
    let mut v = vec![0.0; d];
    for i in 0..d {
        for jj in 0..d {
            for k in 0..d {
                for (a, va) in v.iter_mut().enumerate() {
                    let e = |b: usize| if a == b { 1.0 } else { 0.0 };
                    *va = s[(jj, k)] * e(i) - s[(i, k)] * e(jj) + g[(jj, k)] * s_up[(a, i)]
                        - g[(i, k)] * s_up[(a, jj)]
                        + jt_s[(jj, k)] * j[(a, i)]
                        - jt_s[(i, k)] * j[(a, jj)]
                        - 2.0 * jt_s[(i, jj)] * j[(a, k)]
                        + omega[(jj, k)] * js_up[(a, i)]
                        - omega[(i, k)] * js_up[(a, jj)]
                        - 2.0 * omega[(i, jj)] * js_up[(a, k)];
                }
                for l in 0..d {
                    out[((l * d + k) * d + i) * d + jj] = (0..d).map(|a| g[(l, a)] * v[a]).sum();
                }
            }
        }
    }
    out
}

/// Lowered Bochner tensor `B_{lkij}` (slot order as the Riemann tensor).
pub fn bochner_tensor(bundle: &CurvatureBundle, frame: &MetricFrame) -> TensorValue {
    let d = bundle.dim;
    let (q, _) = q_tensor(bundle, frame);
    let q = DMatrix::from_fn(d, d, |i, j| q.data[i * d + j]);
    let model = kahler_curvature_model(frame, &q);
    let data = bundle
        .riemann_lowered
        .iter()
        .zip(&model)
        .map(|(r, m)| r - m)
        .collect();
    TensorValue::new(d, vec![Variance::Covariant; 4], data)
}

/// `g^{li} B_{lkim}`: the Ricci-type contraction of a lowered four-tensor.
pub fn ricci_contraction(b: &TensorValue, frame: &MetricFrame) -> DMatrix<f64> {
    let d = b.dim;
    DMatrix::from_fn(d, d, |k, m| {
        let mut s = 0.0;
        for l in 0..d {
            for i in 0..d {
                s += frame.g_inv[(l, i)] * b.get(&[l, k, i, m]);
            }
        }
        s
    })
}

/// `𝔅 = ‖ρ‖² − τ²/(2(n+1)) + Δτ/(n+1)`.
pub fn bochner_constant_of(bundle: &CurvatureBundle) -> f64 {
    let n1 = (bundle.dim / 2) as f64 + 1.0;
    bundle.ricci_norm_sq - bundle.tau * bundle.tau / (2.0 * n1) + bundle.laplace_tau / n1
}

/// Residual of the Bochner-Kähler identity
/// `4(n+1)(∇_Xρ)(Y,Z) = 2dτ(X)g(Y,Z) + dτ(Y)g(X,Z) + dτ(Z)g(X,Y) + dτ(JY)g(X,JZ) + dτ(JZ)g(X,JY)`,
/// normalized by `max(1, max |∇ρ|)`.
pub fn nabla_rho_residual_of(bundle: &CurvatureBundle, frame: &MetricFrame) -> f64 {
    let d = bundle.dim;
    let n = (d / 2) as f64;
    let g = &frame.g;
    let gj = g * &frame.j; // g(e_a, Je_b)
    let dt = &bundle.dtau;
    let dtj: Vec<f64> = (0..d).map(|i| (0..d).map(|a| dt[a] * frame.j[(a, i)]).sum()).collect();
    let mut worst = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                let rhs = (2.0 * dt[x] * g[(y, z)]
                    + dt[y] * g[(x, z)]
                    + dt[z] * g[(x, y)]
                    + dtj[y] * gj[(x, z)]
                    + dtj[z] * gj[(x, y)])
                    / (4.0 * (n + 1.0));
                worst = worst.max((bundle.nabla_rho[(x * d + y) * d + z] - rhs).abs());
            }
        }
    }
    relative(worst, max_abs(bundle.nabla_rho.iter()))
}

/// Everything the Bochner checks produce at one point.
#[derive(Debug, Clone)]
pub struct BochnerData {
    pub q: TensorValue,
    pub q_mixed: TensorValue,
    pub b: TensorValue,
    /// `max |B| / max(1, max |R|)`.
    pub bochner_flat_residual: f64,
    pub nabla_rho_residual: f64,
    pub bochner_constant: f64,
}

pub fn bochner_data(bundle: &CurvatureBundle, frame: &MetricFrame) -> BochnerData {
    let (q, q_mixed) = q_tensor(bundle, frame);
    let b = bochner_tensor(bundle, frame);
    BochnerData {
        bochner_flat_residual: relative(b.max_abs(), bundle.riemann_scale()),
        nabla_rho_residual: nabla_rho_residual_of(bundle, frame),
        bochner_constant: bochner_constant_of(bundle),
        q,
        q_mixed,
        b,
    }
}

fn data_at(spec: &ManifoldSpec, point: &[f64]) -> Result<(CurvatureBundle, MetricFrame), GeometryError> {
    let geo = crate::levi_civita::ChartGeometry::new(spec, point, 4)?;
    let bundle = crate::levi_civita::CurvatureBundle::from_geometry(&geo)?;
    Ok((bundle, geo.frame))
}

pub fn bochner_flat_residual(
    spec: &ManifoldSpec,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<(Summary, Verdict), GeometryError> {
    let mut values = Vec::with_capacity(points.len());
    for p in points {
        let (bundle, frame) = data_at(spec, p)?;
        values.push(bochner_data(&bundle, &frame).bochner_flat_residual);
    }
    let s = Summary::of(&values);
    Ok((s, Verdict::from_pass(s.within(tol))))
}

pub fn nabla_rho_identity_residual(spec: &ManifoldSpec, point: &[f64]) -> Result<f64, GeometryError> {
    let (bundle, frame) = data_at(spec, point)?;
    Ok(nabla_rho_residual_of(&bundle, &frame))
}

pub fn bochner_constant(spec: &ManifoldSpec, point: &[f64]) -> Result<f64, GeometryError> {
    Ok(bochner_constant_of(&curvature_bundle(spec, point)?))
}
