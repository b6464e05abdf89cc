//! Residual summaries over sampled points.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn glyph(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotApplicable => "N/A",
        }
    }
}

/// Max and mean of non-negative residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let max = values
            .iter()
            .copied()
            .fold(0.0, |m: f64, v| if m.is_nan() || v.is_nan() { f64::NAN } else { m.max(v) });
        Summary {
            count: values.len(),
            max,
            mean: values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// Passes when every residual is at or below `threshold`.
    pub fn within(&self, threshold: f64) -> bool {
        self.count > 0 && self.max <= threshold
    }
}

/// Mean and population standard deviation of a quantity expected to be constant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Spread {
    pub count: usize,
    pub mean: f64,
    pub spread: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Spread::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Spread {
            count: values.len(),
            mean,
            spread: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `|a − b| / max(1, scale)`.
pub fn relative(diff: f64, scale: f64) -> f64 {
    diff.abs() / scale.abs().max(1.0)
}

/// Default threshold for pointwise identities.
pub const IDENTITY_TOL: f64 = 1e-7;
/// Default threshold for normalized constants and their spread.
pub const CONSTANT_TOL: f64 = 1e-6;

/// JSON has no NaN or infinities; these are written as the strings `"NaN"`, `"inf"`, `"-inf"`.
pub mod json_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// Per-check threshold overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub overrides: std::collections::BTreeMap<String, f64>,
}

impl Tolerances {
    pub fn identity(&self, check: &str) -> f64 {
        self.overrides.get(check).copied().unwrap_or(IDENTITY_TOL)
    }

    pub fn constant(&self, check: &str) -> f64 {
        self.overrides.get(check).copied().unwrap_or(CONSTANT_TOL)
    }
}

/// A residual check over sampled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    #[serde(with = "json_float")]
    pub max: f64,
    #[serde(with = "json_float")]
    pub mean: f64,
    pub count: usize,
    #[serde(with = "json_float")]
    pub threshold: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    pub fn from_values(name: &str, values: &[f64], threshold: f64) -> Self {
        let s = Summary::of(values);
        CheckResult {
            name: name.to_string(),
            max: s.max,
            mean: s.mean,
            count: s.count,
            threshold,
            verdict: Verdict::from_pass(s.within(threshold)),
            note: None,
        }
    }

    pub fn not_applicable(name: &str, threshold: f64, note: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            max: 0.0,
            mean: 0.0,
            count: 0,
            threshold,
            verdict: Verdict::NotApplicable,
            note: Some(note.to_string()),
        }
    }
}

/// A quantity expected to be a constant (here: zero), after per-point normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantResult {
    pub name: String,
    #[serde(with = "json_float")]
    pub mean: f64,
    #[serde(with = "json_float")]
    pub spread: f64,
    #[serde(with = "json_float")]
    pub min: f64,
    #[serde(with = "json_float")]
    pub max: f64,
    pub count: usize,
    #[serde(with = "json_float")]
    pub threshold: f64,
    pub verdict: Verdict,
}

impl ConstantResult {
    /// Passes when both `|mean|` and the spread are below `threshold`.
    pub fn from_values(name: &str, values: &[f64], threshold: f64) -> Self {
        let s = Spread::of(values);
        ConstantResult {
            name: name.to_string(),
            mean: s.mean,
            spread: s.spread,
            min: s.min,
            max: s.max,
            count: s.count,
            threshold,
            verdict: Verdict::from_pass(s.count > 0 && s.mean.abs() < threshold && s.spread < threshold),
        }
    }

    /// Passes when the spread alone is below `threshold`; the value itself is free.
    pub fn constancy(name: &str, values: &[f64], threshold: f64) -> Self {
        let s = Spread::of(values);
        ConstantResult {
            name: name.to_string(),
            mean: s.mean,
            spread: s.spread,
            min: s.min,
            max: s.max,
            count: s.count,
            threshold,
            verdict: Verdict::from_pass(s.count > 0 && s.spread < threshold),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_and_spread() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!((s.max, s.mean, s.count), (3.0, 2.0, 2));
        assert!(s.within(3.0) && !s.within(2.9));
        assert!(!Summary::of(&[]).within(1.0));
        let p = Spread::of(&[1.0, 3.0]);
        assert_eq!((p.mean, p.spread, p.min, p.max), (2.0, 1.0, 1.0, 3.0));
        assert!(!Summary::of(&[f64::NAN, 0.0]).within(1.0));
    }

    #[test]
    fn non_finite_values_survive_json() {
        let c = CheckResult::from_values("x", &[f64::INFINITY], 1e-7);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"inf\""));
        let back: CheckResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back.max, f64::INFINITY);
        assert_eq!(back.verdict, Verdict::Fail);
        let n = ConstantResult::from_values("y", &[f64::NAN], 1e-6);
        let back: ConstantResult = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
        assert!(back.mean.is_nan());
    }

    #[test]
    fn constant_results() {
        assert_eq!(ConstantResult::from_values("z", &[1e-9, -1e-9], 1e-6).verdict, Verdict::Pass);
        assert_eq!(ConstantResult::from_values("z", &[0.5, 0.5], 1e-6).verdict, Verdict::Fail);
        assert_eq!(ConstantResult::constancy("z", &[0.5, 0.5], 1e-6).verdict, Verdict::Pass);
        assert_eq!(ConstantResult::constancy("z", &[0.5, 0.6], 1e-6).verdict, Verdict::Fail);
        assert_eq!(ConstantResult::from_values("z", &[], 1e-6).verdict, Verdict::Fail);
    }
}
