//! Numerical certification of flat complex conformal connections on Kähler
//! charts.
//!
//! A chart is described by a [`dsl::ManifoldSpec`]: metric and complex
//! structure components as expressions in the chart coordinates, optionally
//! with a conformal potential `u`. Every derivative is computed exactly from
//! truncated Taylor arithmetic, and all curvature objects are assembled in
//! coordinates at sampled points.
//!
//! The certifier checks, in both directions, that the Kähler chart carries a
//! flat complex conformal connection exactly when it is Bochner-flat, its scalar
//! curvature distribution is of type B₀, `a + k² = 0`, and the Bochner constant
//! and `b₀` both vanish.

pub mod bochner;
pub mod conformal;
pub mod diff;
pub mod distribution;
pub mod dsl;
pub mod levi_civita;
pub mod models;
pub mod report;
pub mod stats;
pub mod tensor;
