//! End-to-end certification runs and their reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bochner::{bochner_constant_of, bochner_data};
use crate::conformal::{analyze, potential_field, ConformalError, ConformalGeometry, PointConformal};
use crate::distribution::{certify_forward, certify_inverse, DistributionError, ExcludedPoint, TheoremReport};
use crate::dsl::spec::{parse_manifold_spec, ManifoldSpec, SpecError};
use crate::dsl::validate::{validate_spec, ValidateError};
use crate::levi_civita::{kahler_residuals_at, ChartGeometry, CurvatureBundle, GeometryError};
use crate::models::{builtin_model, sample_points, ModelError};
use crate::stats::{CheckResult, ConstantResult, Tolerances, Verdict};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Validate,
    Bochner,
    TheoremForward,
    TheoremInverse,
    All,
}

impl Pipeline {
    fn runs_bochner(self) -> bool {
        matches!(self, Pipeline::Bochner | Pipeline::All)
    }

    fn runs_forward(self) -> bool {
        matches!(self, Pipeline::TheoremForward | Pipeline::All)
    }

    fn runs_inverse(self) -> bool {
        matches!(self, Pipeline::TheoremInverse | Pipeline::All)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Builtin { name: String, params: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub pipeline: Pipeline,
    pub points: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn builtin(name: &str, pipeline: Pipeline) -> Self {
        RunConfig {
            source: Source::Builtin {
                name: name.to_string(),
                params: BTreeMap::new(),
            },
            pipeline,
            points: 100,
            seed: 7,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        }
    }
}

impl From<GeometryError> for RunError {
    fn from(e: GeometryError) -> Self {
        if e.is_numerical_breakdown() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Input(e.to_string())
        }
    }
}

impl From<ConformalError> for RunError {
    fn from(e: ConformalError) -> Self {
        if e.is_numerical_breakdown() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Input(e.to_string())
        }
    }
}

impl From<DistributionError> for RunError {
    fn from(e: DistributionError) -> Self {
        if e.is_numerical_breakdown() {
            RunError::Numerical(e.to_string())
        } else {
            RunError::Input(e.to_string())
        }
    }
}

impl From<ValidateError> for RunError {
    fn from(e: ValidateError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

/// A named group of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckBlock {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub checks: Vec<CheckResult>,
}

impl CheckBlock {
    fn new(name: &str, checks: Vec<CheckResult>) -> Self {
        CheckBlock {
            name: name.to_string(),
            reason: None,
            checks,
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.checks.iter().any(|c| c.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if self.checks.iter().all(|c| c.verdict == Verdict::NotApplicable) {
            Verdict::NotApplicable
        } else {
            Verdict::Pass
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub spec: String,
    pub spec_hash: String,
    pub pipeline: Pipeline,
    pub seed: u64,
    pub points: usize,
    pub blocks: Vec<CheckBlock>,
    pub constants: Vec<ConstantResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<String>,
    pub verdict: Verdict,
}

impl CertificationReport {
    pub fn empty(spec: &ManifoldSpec, pipeline: Pipeline, seed: u64, points: usize) -> Self {
        CertificationReport {
            spec: spec.name.clone(),
            spec_hash: spec.content_hash(),
            pipeline,
            seed,
            points,
            blocks: Vec::new(),
            constants: Vec::new(),
            class: None,
            excluded: Vec::new(),
            reasons: Vec::new(),
            verdict: Verdict::NotApplicable,
        }
    }

    pub fn block(&self, name: &str) -> Option<&CheckBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn check(&self, block: &str, name: &str) -> Option<&CheckResult> {
        self.block(block)?.checks.iter().find(|c| c.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<&ConstantResult> {
        self.constants.iter().find(|c| c.name == name)
    }

    /// Conjunction of the block and constant verdicts; `N/A` entries do not count.
    fn conclude(&mut self) {
        let verdicts: Vec<Verdict> = self
            .blocks
            .iter()
            .map(CheckBlock::verdict)
            .chain(self.constants.iter().map(|c| c.verdict))
            .filter(|v| *v != Verdict::NotApplicable)
            .collect();
        self.verdict = if verdicts.is_empty() {
            Verdict::NotApplicable
        } else {
            Verdict::from_pass(verdicts.iter().all(|v| *v == Verdict::Pass))
        };
    }

    pub fn exit_code(&self) -> i32 {
        if self.verdict == Verdict::Fail {
            EXIT_FAIL
        } else {
            EXIT_PASS
        }
    }
}

pub fn load_spec(source: &Source) -> Result<ManifoldSpec, RunError> {
    match source {
        Source::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(parse_manifold_spec(&text)?)
        }
        Source::Builtin { name, params } => Ok(builtin_model(name, params)?),
    }
}

fn per_point<T, F>(points: &[Vec<f64>], f: F) -> Result<Vec<T>, RunError>
where
    T: Send,
    F: Fn(&[f64]) -> Result<T, RunError> + Sync,
{
    points.par_iter().map(|p| f(p)).collect()
}

fn validation_blocks(spec: &ManifoldSpec, points: &[Vec<f64>], tol: &Tolerances) -> Result<Vec<CheckBlock>, RunError> {
    let v = validate_spec(spec, points)?;
    let validation = v
        .checks()
        .iter()
        .map(|c| {
            let mut r = CheckResult::from_values(&c.name, &[c.residual], c.threshold);
            r.count = v.probes;
            r.verdict = Verdict::from_pass(c.passed);
            r
        })
        .collect();
    let mut blocks = vec![CheckBlock::new("validation", validation)];
    if !v.passed() {
        return Ok(blocks);
    }
    let kahler = per_point(points, |p| {
        let geo = ChartGeometry::new(spec, p, 1)?;
        Ok(kahler_residuals_at(&geo)?)
    })?;
    let col = |f: fn(&crate::levi_civita::KahlerResiduals) -> f64| kahler.iter().map(f).collect::<Vec<_>>();
    blocks.push(CheckBlock::new(
        "kahler",
        vec![
            CheckResult::from_values("nabla_j", &col(|k| k.nabla_j_max), tol.identity("nabla_j")),
            CheckResult::from_values("hermitian", &col(|k| k.hermitian_max), tol.identity("hermitian")),
            CheckResult::from_values("d_omega", &col(|k| k.d_omega_max), tol.identity("d_omega")),
        ],
    ));
    Ok(blocks)
}

fn bochner_block(
    spec: &ManifoldSpec,
    points: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<(CheckBlock, ConstantResult), RunError> {
    let rows = per_point(points, |p| {
        let geo = ChartGeometry::new(spec, p, 4)?;
        let bundle = CurvatureBundle::from_geometry(&geo)?;
        let bd = bochner_data(&bundle, &geo.frame);
        let scale = (bundle.tau * bundle.tau).max(1.0);
        Ok((bd.bochner_flat_residual, bd.nabla_rho_residual, bochner_constant_of(&bundle) / scale))
    })?;
    let flat: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let nabla: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let constant: Vec<f64> = rows.iter().map(|r| r.2).collect();
    Ok((
        CheckBlock::new(
            "bochner",
            vec![
                CheckResult::from_values("bochner_flat", &flat, tol.identity("bochner_flat")),
                CheckResult::from_values("nabla_rho_identity", &nabla, tol.identity("nabla_rho_identity")),
            ],
        ),
        ConstantResult::constancy("bochner_constant_spread", &constant, tol.constant("bochner_constant_spread")),
    ))
}

fn conformal_blocks(spec: &ManifoldSpec, points: &[Vec<f64>], tol: &Tolerances) -> Result<Vec<CheckBlock>, RunError> {
    let gate = tol.identity("lee_hessian");
    let rows: Vec<PointConformal> = per_point(points, |p| {
        let geo = ChartGeometry::new(spec, p, 3)?;
        let u = potential_field(spec, &geo)?;
        let cg = ConformalGeometry::new(&geo, u);
        Ok(analyze(&geo, &cg, gate)?)
    })?;
    let col = |f: &dyn Fn(&PointConformal) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let check = |name: &str, values: &[f64]| CheckResult::from_values(name, values, tol.identity(name));
    let defining = CheckBlock::new(
        "defining_conditions",
        vec![
            check("d_j", &col(&|r| r.defining.d_j)),
            check("d_g", &col(&|r| r.defining.d_g)),
            check("torsion", &col(&|r| r.defining.torsion)),
            check("d_gbar", &col(&|r| r.defining.d_gbar)),
            check("torsion_bar", &col(&|r| r.defining.torsion_bar)),
            check("lee_form", &col(&|r| r.lee.lee_residual)),
        ],
    );
    let gated: Vec<&PointConformal> = rows.iter().filter(|r| r.relations.reduced_relation.is_some()).collect();
    let gated_check = |name: &str, f: &dyn Fn(&PointConformal) -> f64| {
        if gated.is_empty() {
            CheckResult::not_applicable(name, tol.identity(name), "Lee form Hessian condition fails everywhere")
        } else {
            let v: Vec<f64> = gated.iter().map(|r| f(r)).collect();
            check(name, &v)
        }
    };
    let relations = CheckBlock::new(
        "curvature_relations",
        vec![
            check("curvature_relation", &col(&|r| r.relations.curvature_relation)),
            gated_check("reduced_relation", &|r| r.relations.reduced_relation.unwrap_or(f64::NAN)),
            gated_check("d_p", &|r| r.relations.d_p),
        ],
    );
    let flatness = CheckBlock::new(
        "flatness",
        vec![
            check("lee_hessian", &col(&|r| r.relations.lee_hessian)),
            check("ccc_flatness", &col(&|r| r.curvature_residual)),
        ],
    );
    Ok(vec![defining, relations, flatness])
}

fn theorem_block(name: &str, t: &TheoremReport) -> CheckBlock {
    let mut b = CheckBlock::new(name, t.checks.clone());
    b.reason = t.reason.clone();
    if t.verdict == Verdict::Fail && b.verdict() != Verdict::Fail {
        // Excluded points fail the direction even when the remaining checks pass.
        b.checks.push(CheckResult {
            name: "points_excluded".into(),
            max: t.excluded.len() as f64,
            mean: t.excluded.len() as f64,
            count: t.points,
            threshold: 0.0,
            verdict: Verdict::Fail,
            note: t.excluded.first().map(|e| e.reason.clone()),
        });
    }
    b
}

/// Splits the inverse checks into the B₀, decomposition and construction blocks.
fn inverse_blocks(t: &TheoremReport) -> Vec<CheckBlock> {
    let full = theorem_block("inverse", t);
    let (b0, rest): (Vec<_>, Vec<_>) = full.checks.into_iter().partition(|c| c.name.starts_with("b0_"));
    let (fit, rest): (Vec<_>, Vec<_>) = rest.into_iter().partition(|c| c.name == "curvature_decomposition");
    let mut inverse = CheckBlock::new("inverse", rest);
    inverse.reason = full.reason;
    vec![CheckBlock::new("b0", b0), CheckBlock::new("decomposition", fit), inverse]
}

pub fn run_certification(config: &RunConfig) -> Result<CertificationReport, RunError> {
    if config.points == 0 {
        return Err(ModelError::NoPoints.into());
    }
    let spec = load_spec(&config.source)?;
    certify_spec(&spec, config)
}

pub fn certify_spec(spec: &ManifoldSpec, config: &RunConfig) -> Result<CertificationReport, RunError> {
    let tol = &config.tolerances;
    let points = sample_points(spec, config.points, config.seed)?;
    let mut report = CertificationReport::empty(spec, config.pipeline, config.seed, points.len());

    report.blocks = validation_blocks(spec, &points, tol)?;
    if report.blocks.iter().any(|b| b.verdict() == Verdict::Fail) {
        report.reasons.push("chart is not a valid Kähler chart".into());
        report.conclude();
        return Ok(report);
    }
    let pipeline = config.pipeline;

    if pipeline.runs_bochner() {
        let (block, constant) = bochner_block(spec, &points, tol)?;
        report.blocks.push(block);
        report.constants.push(constant);
    }

    if pipeline.runs_forward() {
        if spec.potential_u.is_some() {
            report.blocks.extend(conformal_blocks(spec, &points, tol)?);
            let forward = certify_forward(spec, &points, tol)?;
            report.blocks.push(theorem_block("forward", &forward));
            if let Some(r) = &forward.reason {
                report.reasons.push(format!("forward: {r}"));
            }
            if forward.verdict != Verdict::NotApplicable && pipeline != Pipeline::All {
                report.constants.extend(forward.constants.iter().cloned());
                report.class = forward.class.clone();
            }
            report.excluded.extend(forward.excluded);
        } else if pipeline == Pipeline::TheoremForward {
            return Err(ConformalError::MissingPotential.into());
        } else {
            report.reasons.push("forward: skipped, the chart has no potential".into());
        }
    }

    if pipeline.runs_inverse() {
        let inverse = certify_inverse(&spec.without_potential(), &points, tol)?;
        report.blocks.extend(inverse_blocks(&inverse));
        if let Some(r) = &inverse.reason {
            report.reasons.push(r.clone());
        }
        report.constants.extend(inverse.constants.iter().cloned());
        report.class = inverse.class.clone();
        for e in inverse.excluded {
            if !report.excluded.contains(&e) {
                report.excluded.push(e);
            }
        }
    }

    report.conclude();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
}

pub fn render_json(report: &CertificationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(json: &str) -> Result<CertificationReport, serde_json::Error> {
    serde_json::from_str(json)
}

pub fn render_text(report: &CertificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "spec {} ({}) pipeline={} seed={} points={}",
        report.spec,
        &report.spec_hash[..report.spec_hash.len().min(16)],
        serde_json::to_value(report.pipeline).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        report.seed,
        report.points
    );
    for b in &report.blocks {
        let _ = writeln!(out, "[{}] {}", b.verdict().glyph(), b.name);
        for c in &b.checks {
            let _ = write!(
                out,
                "  {:<5} {:<26} max={:<11.3e} tol={:.0e}",
                c.verdict.glyph(),
                c.name,
                c.max,
                c.threshold
            );
            if let Some(n) = &c.note {
                let _ = write!(out, "  ({n})");
            }
            out.push('\n');
        }
    }
    if !report.constants.is_empty() {
        let _ = writeln!(out, "constants");
        for c in &report.constants {
            let _ = writeln!(
                out,
                "  {:<5} {:<26} mean={:<11.3e} spread={:.3e} tol={:.0e}",
                c.verdict.glyph(),
                c.name,
                c.mean,
                c.spread,
                c.threshold
            );
        }
    }
    if let Some(class) = &report.class {
        let _ = writeln!(out, "class: a + k² {class}");
    }
    for e in &report.excluded {
        let _ = writeln!(out, "excluded point {}: {}", e.index, e.reason);
    }
    for r in &report.reasons {
        let _ = writeln!(out, "reason: {r}");
    }
    let _ = writeln!(out, "verdict: {}", report.verdict.glyph());
    out
}

pub fn render(report: &CertificationReport, format: Format) -> String {
    match format {
        Format::Text => render_text(report),
        Format::Json => render_json(report),
    }
}
