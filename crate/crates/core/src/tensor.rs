//! Pointwise tensor algebra on a chart.
//!
//! Index convention used throughout the crate: `R^l_{kij}` denotes the
//! component with `R(e_i, e_j) e_k = R^l_{kij} e_l`, where
//! `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_{[X,Y]}Z`. Lowered four-tensors are stored
//! in slot order `[l, k, i, j]`, i.e. `R_{lkij} = g(R(e_i, e_j) e_k, e_l)`.
//! `J^i_j` is stored at `[i][j]` (row = upper index) and `Ω_{ij} = g(J e_i, e_j)`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dsl::expr::EvalError;
use crate::dsl::spec::ManifoldSpec;

/// Matrices whose 1-norm condition estimate exceeds this are refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("point {0:?} lies outside the chart domain")]
    OutOfDomain(Vec<f64>),
    #[error("metric is singular at {point:?} (condition estimate {condition:e})")]
    SingularMetric { point: Vec<f64>, condition: f64 },
    #[error("{invariant} violated at {point:?}: residual {residual:e}")]
    Invariant {
        invariant: &'static str,
        residual: f64,
        point: Vec<f64>,
    },
    #[error("slot {slot} out of range for a tensor with {rank} slots")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slot {slot} is already {variance:?}")]
    SlotVariance { slot: usize, variance: Variance },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Inverse by Gauss-Jordan elimination with partial pivoting, together with the
/// 1-norm condition estimate `‖A‖₁‖A⁻¹‖₁`. `None` when a pivot vanishes.
pub fn pivoted_inverse(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if max == 0.0 || !max.is_finite() {
            return None;
        }
        m.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let d = m[(col, col)];
        for c in 0..n {
            m[(col, c)] /= d;
            inv[(col, c)] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                m[(r, c)] -= f * m[(col, c)];
                inv[(r, c)] -= f * inv[(col, c)];
            }
        }
    }
    let norm1 = |x: &DMatrix<f64>| {
        (0..n)
            .map(|c| (0..n).map(|r| x[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let cond = norm1(a) * norm1(&inv);
    Some((inv, cond))
}

pub(crate) fn max_abs<'a>(it: impl IntoIterator<Item = &'a f64>) -> f64 {
    it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Metric, inverse metric, complex structure and Kähler form at one point.
#[derive(Debug, Clone)]
pub struct MetricFrame {
    pub point: Vec<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub condition: f64,
}

pub fn eval_matrix(
    m: &[Vec<crate::dsl::spec::Component>],
    point: &[f64],
) -> Result<DMatrix<f64>, EvalError> {
    let n = m.len();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in m.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            out[(i, j)] = c.expr.evaluate(point)?;
        }
    }
    Ok(out)
}

impl MetricFrame {
    pub fn from_matrices(point: Vec<f64>, g: DMatrix<f64>, j: DMatrix<f64>) -> Result<Self, TensorError> {
        let (g_inv, condition) = match pivoted_inverse(&g) {
            Some((inv, c)) if c <= MAX_CONDITION => (inv, c),
            Some((_, c)) => return Err(TensorError::SingularMetric { point, condition: c }),
            None => {
                return Err(TensorError::SingularMetric {
                    point,
                    condition: f64::INFINITY,
                })
            }
        };
        let omega = j.transpose() * &g;
        let frame = MetricFrame {
            point,
            g,
            g_inv,
            j,
            omega,
            condition,
        };
        frame.check()?;
        Ok(frame)
    }

    fn check(&self) -> Result<(), TensorError> {
        let n = self.dim();
        let scale = max_abs(self.g.iter()).max(1.0);
        let id = &self.g * &self.g_inv - DMatrix::<f64>::identity(n, n);
        self.ensure("g·g⁻¹ = I", max_abs(id.iter()), 1e-10)?;
        let skew = &self.omega + self.omega.transpose();
        self.ensure("Ω skew", max_abs(skew.iter()) / scale, 1e-12)?;
        let herm = self.j.transpose() * &self.g * &self.j - &self.g;
        self.ensure("JᵀgJ = g", max_abs(herm.iter()) / scale, 1e-10)
    }

    fn ensure(&self, invariant: &'static str, residual: f64, tol: f64) -> Result<(), TensorError> {
        if residual <= tol {
            Ok(())
        } else {
            Err(TensorError::Invariant {
                invariant,
                residual,
                point: self.point.clone(),
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += self.g[(a, b)] * u[a] * v[b];
            }
        }
        s
    }

    pub fn apply_j(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|m| self.j[(i, m)] * v[m]).sum()).collect()
    }

    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|m| self.g[(i, m)] * v[m]).sum()).collect()
    }

    pub fn raise(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|m| self.g_inv[(i, m)] * w[m]).sum()).collect()
    }
}

/// The frame of a spec at a chart point.
pub fn metric_frame(spec: &ManifoldSpec, point: &[f64]) -> Result<MetricFrame, TensorError> {
    if !spec.in_domain(point) {
        return Err(TensorError::OutOfDomain(point.to_vec()));
    }
    let g = eval_matrix(&spec.metric, point)?;
    let j = eval_matrix(&spec.complex_structure, point)?;
    MetricFrame::from_matrices(point.to_vec(), g, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Raise,
    Lower,
}

/// Dense row-major tensor components at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    pub dim: usize,
    pub slots: Vec<Variance>,
    pub data: Vec<f64>,
}

impl TensorValue {
    pub fn new(dim: usize, slots: Vec<Variance>, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim.pow(slots.len() as u32), "component count");
        TensorValue { dim, slots, data }
    }

    pub fn zeros(dim: usize, slots: Vec<Variance>) -> Self {
        let len = dim.pow(slots.len() as u32);
        TensorValue::new(dim, slots, vec![0.0; len])
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(self.data.iter())
    }

    pub fn from_matrix(m: &DMatrix<f64>, slots: [Variance; 2]) -> Self {
        let n = m.nrows();
        let data = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
        TensorValue::new(n, slots.to_vec(), data)
    }
}

/// Raises or lowers one slot by contracting with `g⁻¹` or `g`.
pub fn musical(
    t: &TensorValue,
    slot: usize,
    direction: Direction,
    frame: &MetricFrame,
) -> Result<TensorValue, TensorError> {
    if slot >= t.rank() {
        return Err(TensorError::SlotOutOfRange {
            slot,
            rank: t.rank(),
        });
    }
    let (needed, produced, m) = match direction {
        Direction::Raise => (Variance::Covariant, Variance::Contravariant, &frame.g_inv),
        Direction::Lower => (Variance::Contravariant, Variance::Covariant, &frame.g),
    };
    if t.slots[slot] != needed {
        return Err(TensorError::SlotVariance {
            slot,
            variance: t.slots[slot],
        });
    }
    let n = t.dim;
    let stride = n.pow((t.rank() - slot - 1) as u32);
    let mut out = vec![0.0; t.data.len()];
    for (pos, value) in out.iter_mut().enumerate() {
        let a = (pos / stride) % n;
        let base = pos - a * stride;
        *value = (0..n).map(|b| m[(a, b)] * t.data[base + b * stride]).sum();
    }
    let mut slots = t.slots.clone();
    slots[slot] = produced;
    Ok(TensorValue::new(n, slots, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_from(g: DMatrix<f64>) -> MetricFrame {
        let n = g.nrows();
        let mut j = DMatrix::zeros(n, n);
        for b in 0..n / 2 {
            j[(2 * b + 1, 2 * b)] = 1.0;
            j[(2 * b, 2 * b + 1)] = -1.0;
        }
        MetricFrame::from_matrices(vec![0.0; n], g, j).unwrap()
    }

    #[test]
    fn pivoted_inverse_matches_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let (inv, cond) = pivoted_inverse(&a).unwrap();
        let id = &a * &inv;
        assert!(max_abs((id - DMatrix::<f64>::identity(3, 3)).iter()) < 1e-14);
        assert!(cond >= 1.0);
        assert!(pivoted_inverse(&DMatrix::<f64>::zeros(2, 2)).is_none());
    }

    #[test]
    fn singular_metric_refused() {
        let mut g = DMatrix::<f64>::identity(4, 4);
        g[(0, 0)] = 1e-14;
        g[(1, 1)] = 1e-14;
        let mut j = DMatrix::zeros(4, 4);
        j[(1, 0)] = 1.0;
        j[(0, 1)] = -1.0;
        j[(3, 2)] = 1.0;
        j[(2, 3)] = -1.0;
        assert!(matches!(
            MetricFrame::from_matrices(vec![0.0; 4], g, j),
            Err(TensorError::SingularMetric { .. })
        ));
    }

    #[test]
    fn lowering_with_identity_metric_is_identity() {
        let f = frame_from(DMatrix::identity(4, 4));
        let t = TensorValue::from_matrix(
            &DMatrix::identity(4, 4),
            [Variance::Contravariant, Variance::Covariant],
        );
        let lowered = musical(&t, 0, Direction::Lower, &f).unwrap();
        assert_eq!(lowered.data, t.data);
        assert_eq!(lowered.slots, vec![Variance::Covariant, Variance::Covariant]);
    }

    #[test]
    fn slot_errors() {
        let f = frame_from(DMatrix::identity(4, 4));
        let t = TensorValue::zeros(4, vec![Variance::Covariant; 2]);
        assert!(matches!(
            musical(&t, 2, Direction::Raise, &f),
            Err(TensorError::SlotOutOfRange { slot: 2, rank: 2 })
        ));
        assert!(matches!(
            musical(&t, 0, Direction::Lower, &f),
            Err(TensorError::SlotVariance { .. })
        ));
    }

    #[test]
    fn raise_then_lower_round_trip() {
        // hermitian, positive definite, non-diagonal metric
        let g = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, 0.0, 0.5, 0.3, 0.0, 2.0, -0.3, 0.5, 0.5, -0.3, 1.5, 0.0, 0.3, 0.5, 0.0, 1.5],
        );
        let f = frame_from(g);
        let data: Vec<f64> = (0..16).map(|k| ((k * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let t = TensorValue::new(4, vec![Variance::Covariant; 2], data);
        for slot in 0..2 {
            let up = musical(&t, slot, Direction::Raise, &f).unwrap();
            let back = musical(&up, slot, Direction::Lower, &f).unwrap();
            let err = back.data.iter().zip(&t.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "slot {slot}: {err}");
        }
    }
}
