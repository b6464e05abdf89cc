//! Built-in model charts and seeded point sampling.
//!
//! * `flat`: `ℂⁿ` with the Euclidean metric.
//! * `space_form`: complex space form of holomorphic sectional curvature `c`,
//!   from the Kähler potential `(4/c) ln(1 + (c/4)|z|²)`.
//! * `warped_type9`: warped product over the Sasakian space form `ℝ^{2n−1}(−3)`
//!   with generating function `p(t) = (1 − 3(t − t₀))^{−1/3}`. The metric is
//!   `p⁴ dt² + p²{g₀ + (p⁴ − 1) η̃⊗η̃}`. This chart is not complete.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::spec::{ManifoldSpec, SpecDocument};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{0}` (see list-models)")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{param}`")]
    UnknownParam { model: String, param: String },
    #[error("invalid value for `{param}`: {reason}")]
    InvalidParam { param: String, reason: String },
    #[error("coordinate `{0}` has no bounded sample interval")]
    UnboundedDomain(String),
    #[error("point count must be at least 1")]
    NoPoints,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamDoc {
    pub name: &'static str,
    pub default: f64,
    pub description: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamDoc>,
}

pub fn list_models() -> Vec<ModelInfo> {
    vec![
        ModelInfo {
            name: "flat",
            description: "Euclidean C^n, standard complex structure",
            params: vec![ParamDoc {
                name: "n",
                default: 3.0,
                description: "complex dimension (>= 2)",
            }],
        },
        ModelInfo {
            name: "space_form",
            description: "complex space form of holomorphic sectional curvature c, \
                          chart box inside |z|^2 < 4/|c|",
            params: vec![
                ParamDoc {
                    name: "c",
                    default: -4.0,
                    description: "holomorphic sectional curvature (nonzero)",
                },
                ParamDoc {
                    name: "n",
                    default: 3.0,
                    description: "complex dimension (>= 2)",
                },
                ParamDoc {
                    name: "with_potential",
                    default: 0.0,
                    description: "1 attaches the constant potential -ln(-tau)/2 (needs c < 0)",
                },
            ],
        },
        ModelInfo {
            name: "warped_type9",
            description: "warped product over the Sasakian space form R^(2n-1)(-3) \
                          generated by p(t) = (1 - 3(t - t0))^(-1/3); not complete",
            params: vec![
                ParamDoc {
                    name: "t0",
                    default: 0.0,
                    description: "generating-function shift; t ranges below t0 + 1/3",
                },
                ParamDoc {
                    name: "n",
                    default: 3.0,
                    description: "complex dimension (>= 3)",
                },
                ParamDoc {
                    name: "sigma",
                    default: -1.0,
                    description: "orientation of J on dt (only -1 gives a Kaehler structure)",
                },
                ParamDoc {
                    name: "with_potential",
                    default: 1.0,
                    description: "1 attaches u = -ln(-tau)/2",
                },
            ],
        },
    ]
}

fn resolve(model: &str, given: &BTreeMap<String, f64>) -> Result<BTreeMap<&'static str, f64>, ModelError> {
    let info = list_models()
        .into_iter()
        .find(|m| m.name == model)
        .ok_or_else(|| ModelError::UnknownModel(model.to_string()))?;
    let mut out: BTreeMap<&'static str, f64> = info.params.iter().map(|p| (p.name, p.default)).collect();
    for (k, v) in given {
        let slot = info
            .params
            .iter()
            .find(|p| p.name == k)
            .ok_or_else(|| ModelError::UnknownParam {
                model: model.to_string(),
                param: k.clone(),
            })?;
        if !v.is_finite() {
            return Err(invalid(slot.name, "not finite"));
        }
        out.insert(slot.name, *v);
    }
    Ok(out)
}

fn invalid(param: &str, reason: &str) -> ModelError {
    ModelError::InvalidParam {
        param: param.to_string(),
        reason: reason.to_string(),
    }
}

fn integer(params: &BTreeMap<&'static str, f64>, name: &str, min: usize) -> Result<usize, ModelError> {
    let v = params[name];
    if v.fract() != 0.0 || v < min as f64 || v > 16.0 {
        return Err(invalid(name, &format!("expected an integer between {min} and 16")));
    }
    Ok(v as usize)
}

fn flag(params: &BTreeMap<&'static str, f64>, name: &str) -> Result<bool, ModelError> {
    match params[name] {
        v if v == 0.0 => Ok(false),
        v if v == 1.0 => Ok(true),
        _ => Err(invalid(name, "expected 0 or 1")),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn complex_coordinates(n: usize) -> Vec<String> {
    (1..=n).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect()
}

/// `J ∂x_a = ∂y_a` in coordinates `(x1, y1, …, xn, yn)`.
fn standard_j(n: usize) -> Vec<Vec<String>> {
    let d = 2 * n;
    let mut j = vec![vec!["0".to_string(); d]; d];
    for a in 0..n {
        j[2 * a + 1][2 * a] = "1".into();
        j[2 * a][2 * a + 1] = "-1".into();
    }
    j
}

fn box_domain(coords: &[String], lo: f64, hi: f64) -> BTreeMap<String, Option<[Option<f64>; 2]>> {
    coords.iter().map(|c| (c.clone(), Some([Some(lo), Some(hi)]))).collect()
}

fn build(doc: SpecDocument) -> ManifoldSpec {
    ManifoldSpec::from_document(&doc).expect("built-in model documents are well formed")
}

pub fn flat(n: usize) -> ManifoldSpec {
    let coords = complex_coordinates(n);
    let d = 2 * n;
    let metric = (0..d)
        .map(|i| (0..d).map(|j| if i == j { "1" } else { "0" }.to_string()).collect())
        .collect();
    build(SpecDocument {
        name: "flat".into(),
        dim: d as i64,
        domain: box_domain(&coords, -1.0, 1.0),
        coordinates: coords,
        params: BTreeMap::new(),
        metric,
        complex_structure: standard_j(n),
        potential_u: None,
    })
}

/// Metric `Re h_{ab̄}` / `Im h_{ab̄}` of the potential `(4/c) ln(1 + (c/4)|z|²)`,
/// with `h_{ab̄} = δ_{ab}/D − s z̄_a z_b/D²`, `s = c/4`, `D = 1 + s|z|²`.
pub fn space_form(c: f64, n: usize, with_potential: bool) -> Result<ManifoldSpec, ModelError> {
    if c == 0.0 {
        return Err(invalid("c", "must be nonzero"));
    }
    if with_potential && c > 0.0 {
        return Err(invalid("with_potential", "needs c < 0 so that tau < 0"));
    }
    let coords = complex_coordinates(n);
    let d = 2 * n;
    let r2 = (1..=n)
        .map(|a| format!("x{a}^2 + y{a}^2"))
        .collect::<Vec<_>>()
        .join(" + ");
    let den = format!("(1 + s*({r2}))");
    let re = |a: usize, b: usize| {
        let cross = format!("s*(x{a}*x{b} + y{a}*y{b})/{den}^2");
        if a == b {
            format!("1/{den} - {cross}")
        } else {
            format!("-{cross}")
        }
    };
    let im = |a: usize, b: usize| {
        if a == b {
            "0".to_string()
        } else {
            format!("-s*(x{a}*y{b} - y{a}*x{b})/{den}^2")
        }
    };
    let neg = |e: String| if e == "0" { e } else { format!("-({e})") };
    let mut metric = vec![vec![String::new(); d]; d];
    for a in 1..=n {
        for b in 1..=n {
            let (xa, ya, xb, yb) = (2 * a - 2, 2 * a - 1, 2 * b - 2, 2 * b - 1);
            metric[xa][xb] = re(a, b);
            metric[ya][yb] = re(a, b);
            metric[xa][yb] = im(a, b);
            metric[ya][xb] = neg(im(a, b));
        }
    }
    // Box with 2n r² = 0.75 · 4/|c|.
    let r = (3.0 / (c.abs() * d as f64)).sqrt();
    let mut params = BTreeMap::new();
    params.insert("c".to_string(), c);
    params.insert("s".to_string(), c / 4.0);
    let tau = (n * (n + 1)) as f64 * c;
    Ok(build(SpecDocument {
        name: "space_form".into(),
        dim: d as i64,
        domain: box_domain(&coords, -r, r),
        coordinates: coords,
        params,
        metric,
        complex_structure: standard_j(n),
        potential_u: with_potential.then(|| format!("-ln({})/2", num(-tau))),
    }))
}

/// Coordinates `(t, x1, y1, …, x_{n−1}, y_{n−1}, z)`.
pub fn warped_type9(t0: f64, n: usize, sigma: f64, with_potential: bool) -> Result<ManifoldSpec, ModelError> {
    if n < 3 {
        return Err(invalid("n", "the warped model needs n >= 3"));
    }
    if sigma != 1.0 && sigma != -1.0 {
        return Err(invalid("sigma", "expected 1 or -1"));
    }
    let m = n - 1;
    let d = 2 * n;
    let mut coords = vec!["t".to_string()];
    for i in 1..=m {
        coords.push(format!("x{i}"));
        coords.push(format!("y{i}"));
    }
    coords.push("z".into());
    let z = d - 1;
    let x = |i: usize| 2 * i - 1;
    let y = |i: usize| 2 * i;
    let base = "(1 - 3*(t - t0))";
    let p = format!("{base}^(-1/3)");
    let p2 = format!("{base}^(-2/3)");
    let p4 = format!("{base}^(-4/3)");
    let p6 = format!("{base}^(-2)");

    // η̃ = ½(dz − Σ yᵢ dxᵢ)
    let mut eta = vec![String::new(); d];
    for i in 1..=m {
        eta[x(i)] = format!("(-y{i}/2)");
    }
    eta[z] = "(1/2)".into();
    let mut metric = vec![vec!["0".to_string(); d]; d];
    metric[0][0] = p4.clone();
    for a in 1..d {
        for b in 1..d {
            let mut terms = Vec::new();
            if a == b && a != z {
                terms.push(format!("{p2}/4"));
            }
            if !eta[a].is_empty() && !eta[b].is_empty() {
                terms.push(format!("{p6}*{}*{}", eta[a], eta[b]));
            }
            if !terms.is_empty() {
                metric[a][b] = terms.join(" + ");
            }
        }
    }

    // J ∂yᵢ = ∂xᵢ + yᵢ ∂z, J ∂xᵢ = −∂yᵢ + σ(yᵢ p/2) ∂t,
    // J ∂t = σ(2/p) ∂z, J ∂z = −σ(p/2) ∂t.
    let mut j = vec![vec!["0".to_string(); d]; d];
    j[z][0] = format!("2*sigma*{base}^(1/3)");
    j[0][z] = format!("-sigma*{p}/2");
    for i in 1..=m {
        j[x(i)][y(i)] = "1".into();
        j[z][y(i)] = format!("y{i}");
        j[y(i)][x(i)] = "-1".into();
        j[0][x(i)] = format!("sigma*y{i}*{p}/2");
    }

    let mut params = BTreeMap::new();
    params.insert("t0".to_string(), t0);
    params.insert("sigma".to_string(), sigma);
    let mut domain = box_domain(&coords, -1.0, 1.0);
    domain.insert("t".into(), Some([Some(t0 - 2.0), Some(t0 + 1.0 / 3.0 - 0.05)]));
    let potential = warped_potential(n);
    Ok(build(SpecDocument {
        name: "warped_type9".into(),
        dim: d as i64,
        coordinates: coords,
        params,
        metric,
        complex_structure: j,
        potential_u: with_potential.then_some(potential),
        domain,
    }))
}

/// `u = −½ ln(−τ)` with `τ = −4(n+1)(n+2) p²`.
fn warped_potential(n: usize) -> String {
    let scale = 4 * (n + 1) * (n + 2);
    format!("-ln({scale})/2 + ln(1 - 3*(t - t0))/3")
}

pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ManifoldSpec, ModelError> {
    let p = resolve(name, params)?;
    match name {
        "flat" => Ok(flat(integer(&p, "n", 2)?)),
        "space_form" => space_form(p["c"], integer(&p, "n", 2)?, flag(&p, "with_potential")?),
        "warped_type9" => warped_type9(
            p["t0"],
            integer(&p, "n", 3)?,
            p["sigma"],
            flag(&p, "with_potential")?,
        ),
        _ => Err(ModelError::UnknownModel(name.to_string())),
    }
}

/// Uniform points in the spec's domain box, reproducible for a fixed seed.
pub fn sample_points(spec: &ManifoldSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, ModelError> {
    if count == 0 {
        return Err(ModelError::NoPoints);
    }
    let mut bounds = Vec::with_capacity(spec.dim);
    for (name, iv) in spec.coordinates.iter().zip(&spec.domain) {
        match (iv.lo, iv.hi) {
            (Some(lo), Some(hi)) => bounds.push((lo, hi)),
            _ => return Err(ModelError::UnboundedDomain(name.clone())),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::partial_derivative;
    use crate::dsl::expr::parse_expression;
    use crate::dsl::validate::validate_spec;
    use crate::levi_civita::kahler_residuals;
    use crate::tensor::eval_matrix;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn sampling_is_reproducible_and_inside_the_box() {
        let spec = flat(3);
        let a = sample_points(&spec, 5, 42).unwrap();
        assert_eq!(a, sample_points(&spec, 5, 42).unwrap());
        assert_ne!(a, sample_points(&spec, 5, 43).unwrap());
        assert!(a.iter().all(|p| spec.in_domain(p)));
        assert!(matches!(sample_points(&spec, 0, 1), Err(ModelError::NoPoints)));
    }

    #[test]
    fn warped_samples_stay_below_the_pole() {
        let spec = warped_type9(0.25, 3, -1.0, true).unwrap();
        for p in sample_points(&spec, 200, 8).unwrap() {
            assert!(1.0 - 3.0 * (p[0] - 0.25) > 0.0);
        }
    }

    #[test]
    fn space_form_box_lies_inside_the_chart() {
        let spec = space_form(-4.0, 3, false).unwrap();
        for p in sample_points(&spec, 100, 8).unwrap() {
            let r2: f64 = p.iter().map(|x| x * x).sum();
            assert!(r2 < 1.0);
        }
    }

    #[test]
    fn space_form_metric_is_the_complex_hessian_of_its_potential() {
        let c = -4.0;
        let n = 3;
        let spec = space_form(c, n, false).unwrap();
        let r2 = "x1^2 + y1^2 + x2^2 + y2^2 + x3^2 + y3^2";
        let f = parse_expression(&format!("(4/({c}))*ln(1 + ({c}/4)*({r2}))"), &spec.coordinates, &BTreeMap::new())
            .unwrap();
        let second = |i: usize, j: usize, p: &[f64]| {
            let mut alpha = [0u8; 6];
            alpha[i] += 1;
            alpha[j] += 1;
            partial_derivative(&f, &alpha, p).unwrap()
        };
        for p in sample_points(&spec, 10, 4).unwrap() {
            let g = eval_matrix(&spec.metric, &p).unwrap();
            for a in 0..n {
                for b in 0..n {
                    let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
                    let re = 0.25 * (second(xa, xb, &p) + second(ya, yb, &p));
                    let im = 0.25 * (second(xa, yb, &p) - second(ya, xb, &p));
                    assert!((g[(xa, xb)] - re).abs() < 1e-12);
                    assert!((g[(ya, yb)] - re).abs() < 1e-12);
                    assert!((g[(xa, yb)] - im).abs() < 1e-12);
                    assert!((g[(ya, xb)] + im).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn builtin_models_validate() {
        for name in ["flat", "space_form", "warped_type9"] {
            let spec = builtin_model(name, &BTreeMap::new()).unwrap();
            let pts = sample_points(&spec, 10, 1).unwrap();
            assert!(validate_spec(&spec, &pts).unwrap().passed(), "{name}");
        }
    }

    #[test]
    fn exactly_one_orientation_is_kahler() {
        let passing: Vec<f64> = [-1.0, 1.0]
            .into_iter()
            .filter(|&s| {
                let spec = warped_type9(0.0, 3, s, false).unwrap();
                let pts = sample_points(&spec, 10, 3).unwrap();
                kahler_residuals(&spec, &pts).unwrap().max() < 1e-8
            })
            .collect();
        assert_eq!(passing, vec![-1.0]);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(
            builtin_model("torus", &BTreeMap::new()),
            Err(ModelError::UnknownModel(_))
        ));
        assert!(matches!(
            builtin_model("flat", &params(&[("c", 1.0)])),
            Err(ModelError::UnknownParam { .. })
        ));
        assert!(matches!(
            builtin_model("space_form", &params(&[("c", 0.0)])),
            Err(ModelError::InvalidParam { .. })
        ));
        assert!(builtin_model("warped_type9", &params(&[("n", 2.0)])).is_err());
        assert!(builtin_model("flat", &params(&[("n", 2.5)])).is_err());
        let spec = builtin_model("space_form", &params(&[("c", -2.0), ("n", 2.0)])).unwrap();
        assert_eq!(spec.dim, 4);
    }

    #[test]
    fn emitted_specs_round_trip() {
        for name in ["flat", "space_form", "warped_type9"] {
            let spec = builtin_model(name, &BTreeMap::new()).unwrap();
            let back = crate::dsl::spec::parse_manifold_spec(&spec.to_json()).unwrap();
            assert_eq!(back.content_hash(), spec.content_hash());
        }
    }

    #[test]
    fn every_listed_model_builds_with_defaults() {
        for m in list_models() {
            let p: BTreeMap<String, f64> = m.params.iter().map(|d| (d.name.to_string(), d.default)).collect();
            builtin_model(m.name, &p).unwrap();
        }
    }
}
