//! Manifold specification documents.
//!
//! A spec file is JSON:
//!
//! ```json
//! {
//!   "name": "flat",
//!   "dim": 4,
//!   "coordinates": ["x1", "y1", "x2", "y2"],
//!   "params": {},
//!   "metric": [["1","0","0","0"], ...],
//!   "complex_structure": [["0","-1","0","0"], ...],
//!   "potential_u": null,
//!   "domain": {"x1": [-1, 1], "y1": null, ...}
//! }
//! ```
//!
//! `complex_structure[i][j]` is `J^i_j`, i.e. `J(∂_j) = Σ_i J^i_j ∂_i`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::expr::{parse_with_shared, Expr, ParseError};

/// Closed interval with optional endpoints; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval { lo: None, hi: None };

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }
}

/// A component expression together with the source text it was parsed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub source: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    pub name: String,
    pub dim: usize,
    pub coordinates: Vec<String>,
    pub params: BTreeMap<String, f64>,
    pub metric: Vec<Vec<Component>>,
    pub complex_structure: Vec<Vec<Component>>,
    pub potential_u: Option<Component>,
    pub domain: Vec<Interval>,
}

/// On-disk form of [`ManifoldSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub name: String,
    pub dim: i64,
    pub coordinates: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub metric: Vec<Vec<String>>,
    pub complex_structure: Vec<Vec<String>>,
    #[serde(default)]
    pub potential_u: Option<String>,
    #[serde(default)]
    pub domain: BTreeMap<String, Option<[Option<f64>; 2]>>,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("malformed spec document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension {0} is odd; a Kähler chart has even dimension")]
    OddDimension(i64),
    #[error("dimension {0} is below 4")]
    DimensionTooSmall(i64),
    #[error("{got} coordinates declared for dimension {dim}")]
    CoordinateCount { dim: usize, got: usize },
    #[error("coordinate `{0}` declared twice")]
    DuplicateCoordinate(String),
    #[error("invalid coordinate name `{0}`")]
    BadCoordinateName(String),
    #[error("parameter `{0}` shadows a coordinate")]
    ParamShadowsCoordinate(String),
    #[error("parameter `{0}` is not finite")]
    NonFiniteParam(String),
    #[error("`{field}` must be a {dim}x{dim} array")]
    MatrixShape { field: &'static str, dim: usize },
    #[error("`{field}[{row}][{col}]`: {source}")]
    Component {
        field: &'static str,
        row: usize,
        col: usize,
        source: ParseError,
    },
    #[error("`potential_u`: {0}")]
    Potential(ParseError),
    #[error("domain names unknown coordinate `{0}`")]
    UnknownDomainCoordinate(String),
    #[error("domain interval for `{0}` is empty or not finite")]
    BadInterval(String),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ManifoldSpec {
    /// Complex dimension `n` (the chart has real dimension `2n`).
    pub fn n(&self) -> usize {
        self.dim / 2
    }

    pub fn from_document(doc: &SpecDocument) -> Result<Self, SpecError> {
        if doc.dim % 2 != 0 {
            return Err(SpecError::OddDimension(doc.dim));
        }
        if doc.dim < 4 {
            return Err(SpecError::DimensionTooSmall(doc.dim));
        }
        let dim = doc.dim as usize;
        if doc.coordinates.len() != dim {
            return Err(SpecError::CoordinateCount {
                dim,
                got: doc.coordinates.len(),
            });
        }
        for (i, c) in doc.coordinates.iter().enumerate() {
            if !is_ident(c) {
                return Err(SpecError::BadCoordinateName(c.clone()));
            }
            if doc.coordinates[..i].contains(c) {
                return Err(SpecError::DuplicateCoordinate(c.clone()));
            }
        }
        for (name, v) in &doc.params {
            if doc.coordinates.contains(name) {
                return Err(SpecError::ParamShadowsCoordinate(name.clone()));
            }
            if !v.is_finite() {
                return Err(SpecError::NonFiniteParam(name.clone()));
            }
        }
        let coords = Arc::new(doc.coordinates.clone());
        let parse_matrix = |field: &'static str, m: &[Vec<String>]| {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(SpecError::MatrixShape { field, dim });
            }
            m.iter()
                .enumerate()
                .map(|(row, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(col, src)| {
                            parse_with_shared(src, coords.clone(), &doc.params)
                                .map(|expr| Component {
                                    source: src.clone(),
                                    expr,
                                })
                                .map_err(|source| SpecError::Component {
                                    field,
                                    row,
                                    col,
                                    source,
                                })
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let metric = parse_matrix("metric", &doc.metric)?;
        let complex_structure = parse_matrix("complex_structure", &doc.complex_structure)?;
        let potential_u = doc
            .potential_u
            .as_ref()
            .map(|src| {
                parse_with_shared(src, coords.clone(), &doc.params)
                    .map(|expr| Component {
                        source: src.clone(),
                        expr,
                    })
                    .map_err(SpecError::Potential)
            })
            .transpose()?;
        let mut domain = vec![Interval::UNBOUNDED; dim];
        for (name, iv) in &doc.domain {
            let idx = doc
                .coordinates
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| SpecError::UnknownDomainCoordinate(name.clone()))?;
            let interval = match iv {
                None => Interval::UNBOUNDED,
                Some([lo, hi]) => Interval { lo: *lo, hi: *hi },
            };
            let finite = interval.lo.is_none_or(f64::is_finite) && interval.hi.is_none_or(f64::is_finite);
            let ordered = match (interval.lo, interval.hi) {
                (Some(lo), Some(hi)) => lo <= hi,
                _ => true,
            };
            if !finite || !ordered {
                return Err(SpecError::BadInterval(name.clone()));
            }
            domain[idx] = interval;
        }
        Ok(ManifoldSpec {
            name: doc.name.clone(),
            dim,
            coordinates: doc.coordinates.clone(),
            params: doc.params.clone(),
            metric,
            complex_structure,
            potential_u,
            domain,
        })
    }

    pub fn to_document(&self) -> SpecDocument {
        let matrix = |m: &[Vec<Component>]| {
            m.iter()
                .map(|r| r.iter().map(|c| c.source.clone()).collect())
                .collect()
        };
        SpecDocument {
            name: self.name.clone(),
            dim: self.dim as i64,
            coordinates: self.coordinates.clone(),
            params: self.params.clone(),
            metric: matrix(&self.metric),
            complex_structure: matrix(&self.complex_structure),
            potential_u: self.potential_u.as_ref().map(|c| c.source.clone()),
            domain: self
                .coordinates
                .iter()
                .zip(&self.domain)
                .map(|(name, iv)| {
                    let v = if *iv == Interval::UNBOUNDED {
                        None
                    } else {
                        Some([iv.lo, iv.hi])
                    };
                    (name.clone(), v)
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("spec document serializes")
    }

    /// SHA-256 of the compact JSON document, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_document()).expect("spec document serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn without_potential(&self) -> ManifoldSpec {
        ManifoldSpec {
            potential_u: None,
            ..self.clone()
        }
    }

    /// The same chart with `potential_u` replaced by `text`.
    pub fn with_potential(&self, text: &str) -> Result<ManifoldSpec, SpecError> {
        let mut doc = self.to_document();
        doc.potential_u = Some(text.to_string());
        ManifoldSpec::from_document(&doc)
    }

    pub fn in_domain(&self, point: &[f64]) -> bool {
        point.len() == self.dim && self.domain.iter().zip(point).all(|(iv, &x)| iv.contains(x))
    }
}

pub fn parse_manifold_spec(document: &str) -> Result<ManifoldSpec, SpecError> {
    let doc: SpecDocument = serde_json::from_str(document)?;
    ManifoldSpec::from_document(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_doc(dim: usize) -> String {
        let coords: Vec<String> = (0..dim).map(|i| format!("q{i}")).collect();
        let metric: Vec<Vec<String>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { "1" } else { "0" }.to_string()).collect())
            .collect();
        let mut j = vec![vec!["0".to_string(); dim]; dim];
        for b in 0..dim / 2 {
            j[2 * b + 1][2 * b] = "1".into();
            j[2 * b][2 * b + 1] = "-1".into();
        }
        serde_json::json!({
            "name": "flat",
            "dim": dim,
            "coordinates": coords,
            "params": {},
            "metric": metric,
            "complex_structure": j,
            "potential_u": null,
            "domain": {}
        })
        .to_string()
    }

    #[test]
    fn flat_document_parses() {
        let spec = parse_manifold_spec(&flat_doc(6)).unwrap();
        assert_eq!(spec.dim, 6);
        assert_eq!(spec.n(), 3);
        assert!(spec.potential_u.is_none());
    }

    #[test]
    fn odd_dimension_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&flat_doc(6)).unwrap();
        v["dim"] = 5.into();
        v["coordinates"] = serde_json::json!(["a", "b", "c", "d", "e"]);
        assert!(matches!(
            parse_manifold_spec(&v.to_string()),
            Err(SpecError::OddDimension(5))
        ));
    }

    #[test]
    fn component_errors_report_indices() {
        let mut v: serde_json::Value = serde_json::from_str(&flat_doc(4)).unwrap();
        v["metric"][1][2] = "foo(q0)".into();
        match parse_manifold_spec(&v.to_string()) {
            Err(SpecError::Component { field, row, col, .. }) => {
                assert_eq!((field, row, col), ("metric", 1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_and_schema_errors() {
        let mut v: serde_json::Value = serde_json::from_str(&flat_doc(4)).unwrap();
        v["metric"] = serde_json::json!([["1"]]);
        assert!(matches!(
            parse_manifold_spec(&v.to_string()),
            Err(SpecError::MatrixShape { .. })
        ));
        assert!(matches!(parse_manifold_spec("{not json"), Err(SpecError::Json(_))));
        let mut w: serde_json::Value = serde_json::from_str(&flat_doc(4)).unwrap();
        w["extra"] = 1.into();
        assert!(matches!(parse_manifold_spec(&w.to_string()), Err(SpecError::Json(_))));
    }

    #[test]
    fn document_round_trip() {
        let spec = parse_manifold_spec(&flat_doc(4)).unwrap();
        let again = parse_manifold_spec(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
        assert_eq!(spec.content_hash(), again.content_hash());
    }
}
