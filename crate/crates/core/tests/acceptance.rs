//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Complex, DMatrix};

use kahler_conformal::bochner::bochner_data;
use kahler_conformal::conformal::{analyze, potential_field, ConformalGeometry};
use kahler_conformal::diff::partial_derivative;
use kahler_conformal::distribution::{b0_residuals, certify_forward, certify_inverse};
use kahler_conformal::dsl::{parse_expression, ManifoldSpec};
use kahler_conformal::levi_civita::{curvature_bundle, ChartGeometry, CurvatureBundle};
use kahler_conformal::models::{flat, sample_points, space_form, warped_type9};
use kahler_conformal::report::parse_report;
use kahler_conformal::stats::{relative, Tolerances, Verdict};

const EXACT_ZERO: f64 = 1e-12;
const CONTROL_TOL: f64 = 1e-8;
const RELATION_TOL: f64 = 1e-8;
const THEOREM_TOL: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const ORACLE_TOL: f64 = 1e-5;
const SEED: u64 = 7;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn kcert(args: &[&str], threads: Option<&str>) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kcert"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("CERTIFY_THREADS", t);
    }
    let out = cmd.output().expect("kcert runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn criterion_1() -> Outcome {
    let spec = flat(3);
    let with_zero = spec.with_potential("0").unwrap();
    let mut worst = 0.0f64;
    for p in sample_points(&spec, 20, SEED).unwrap() {
        let geo = ChartGeometry::new(&spec, &p, 4).unwrap();
        let b = CurvatureBundle::from_geometry(&geo).unwrap();
        let bd = bochner_data(&b, &geo.frame);
        for (name, v) in [
            ("gamma", max_abs(&b.gamma)),
            ("riemann", max_abs(&b.riemann)),
            ("ricci", max_abs(&b.ricci)),
            ("tau", b.tau.abs()),
            ("bochner", bd.b.max_abs()),
        ] {
            ensure(v < EXACT_ZERO, || format!("{name} = {v:e} at {p:?}"))?;
            worst = worst.max(v);
        }
        let geo = ChartGeometry::new(&with_zero, &p, 3).unwrap();
        let u = potential_field(&with_zero, &geo).unwrap();
        let a = analyze(&geo, &ConformalGeometry::new(&geo, u), THEOREM_TOL).unwrap();
        let curv = a.data.curvature.max_abs();
        ensure(curv < EXACT_ZERO, || format!("conformal curvature {curv:e} at {p:?}"))?;
        worst = worst.max(curv);
    }
    Ok(format!("max |·| = {worst:.1e} over 20 points"))
}

/// Ricci tensor of a Kähler potential by `ρ = −i∂∂̄ ln det h`, with `h` taken
/// from exact second partials of the potential and `∂∂̄` by central differences.
fn ricci_from_potential(potential: &str, coords: &[String], p: &[f64]) -> DMatrix<f64> {
    let n = coords.len() / 2;
    let f = parse_expression(potential, coords, &BTreeMap::new()).unwrap();
    let second = |i: usize, j: usize, q: &[f64]| {
        let mut alpha = vec![0u8; coords.len()];
        alpha[i] += 1;
        alpha[j] += 1;
        partial_derivative(&f, &alpha, q).unwrap()
    };
    let log_det = |q: &[f64]| {
        let h = DMatrix::<Complex<f64>>::from_fn(n, n, |a, b| {
            let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
            Complex::new(
                0.25 * (second(xa, xb, q) + second(ya, yb, q)),
                0.25 * (second(xa, yb, q) - second(ya, xb, q)),
            )
        });
        h.determinant().re.ln()
    };
    let step = 5e-4;
    let d2 = |i: usize, j: usize| {
        let shifted = |si: f64, sj: f64| {
            let mut q = p.to_vec();
            q[i] += si;
            q[j] += sj;
            log_det(&q)
        };
        (shifted(step, step) - shifted(step, -step) - shifted(-step, step) + shifted(-step, -step))
            / (4.0 * step * step)
    };
    let mut rho = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
            let re = -0.5 * (d2(xa, xb) + d2(ya, yb));
            let im = -0.5 * (d2(xa, yb) - d2(ya, xb));
            rho[(xa, xb)] = re;
            rho[(ya, yb)] = re;
            rho[(xa, yb)] = im;
            rho[(ya, xb)] = -im;
        }
    }
    rho
}

fn criterion_2() -> Outcome {
    let spec = space_form(-4.0, 3, false).unwrap();
    let (mut rho_res, mut tau_res, mut b_res, mut oracle_res) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let r2 = "x1^2 + y1^2 + x2^2 + y2^2 + x3^2 + y3^2";
    let potential = format!("-ln(1 - ({r2}))");
    for (idx, p) in sample_points(&spec, 100, SEED).unwrap().into_iter().enumerate() {
        let geo = ChartGeometry::new(&spec, &p, 4).unwrap();
        let b = CurvatureBundle::from_geometry(&geo).unwrap();
        let g = &geo.frame.g;
        let rho_diff: Vec<f64> = (0..36).map(|k| b.ricci[k] + 8.0 * g[(k / 6, k % 6)]).collect();
        rho_res = rho_res.max(relative(max_abs(&rho_diff), max_abs(&b.ricci)));
        tau_res = tau_res.max(relative(b.tau + 48.0, 48.0));
        b_res = b_res.max(bochner_data(&b, &geo.frame).bochner_flat_residual);
        if idx % 10 == 0 {
            let oracle = ricci_from_potential(&potential, &spec.coordinates, &p);
            let diff: Vec<f64> = (0..36).map(|k| b.ricci[k] - oracle[(k / 6, k % 6)]).collect();
            oracle_res = oracle_res.max(relative(max_abs(&diff), max_abs(&b.ricci)));
        }
    }
    ensure(rho_res < CONTROL_TOL, || format!("ρ + 8g residual {rho_res:e}"))?;
    ensure(tau_res < CONTROL_TOL, || format!("τ + 48 residual {tau_res:e}"))?;
    ensure(b_res < CONTROL_TOL, || format!("‖B‖ residual {b_res:e}"))?;
    ensure(oracle_res < ORACLE_TOL, || format!("ρ vs potential oracle {oracle_res:e}"))?;
    Ok(format!(
        "ρ+8g {rho_res:.1e}, τ+48 {tau_res:.1e}, B {b_res:.1e}, potential oracle {oracle_res:.1e}"
    ))
}

fn criterion_3() -> Outcome {
    let potentials = ["0.3*x1*y1 + 0.2*sin(x2)", "0.1*exp(y1)*cos(x2) - 0.25*x1^2"];
    let mut worst = 0.0f64;
    let mut count = 0;
    for base in [flat(3), space_form(-4.0, 3, false).unwrap(), warped_type9(0.0, 3, -1.0, false).unwrap()] {
        for u in potentials {
            let spec = base.with_potential(u).unwrap();
            for p in sample_points(&spec, 20, SEED).unwrap() {
                let geo = ChartGeometry::new(&spec, &p, 3).unwrap();
                let uf = potential_field(&spec, &geo).unwrap();
                let a = analyze(&geo, &ConformalGeometry::new(&geo, uf), THEOREM_TOL).unwrap();
                let r = a.relations.curvature_relation;
                ensure(r < RELATION_TOL, || format!("{} with u = {u}: {r:e} at {p:?}", base.name))?;
                worst = worst.max(r);
                count += 1;
            }
        }
    }
    Ok(format!("{count} point evaluations, max residual {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let spec = warped_type9(0.0, 3, -1.0, true).unwrap();
    let pts = sample_points(&spec, 100, SEED).unwrap();
    let r = certify_forward(&spec, &pts, &Tolerances::default()).map_err(|e| e.to_string())?;
    for c in &r.checks {
        ensure(c.verdict == Verdict::Pass && c.max < THEOREM_TOL && c.count == 100, || {
            format!("{}: {:?} max {:e} over {}", c.name, c.verdict, c.max, c.count)
        })?;
    }
    for c in &r.constants {
        ensure(c.mean.abs() < THEOREM_TOL && c.spread < THEOREM_TOL, || {
            format!("{}: mean {:e} spread {:e}", c.name, c.mean, c.spread)
        })?;
    }
    ensure(r.verdict == Verdict::Pass, || format!("verdict {:?}", r.verdict))?;
    let worst = r.checks.iter().map(|c| c.max).fold(0.0, f64::max);
    Ok(format!("{} checks, worst {worst:.1e}; class {}", r.checks.len(), r.class.unwrap_or_default()))
}

fn criterion_5() -> Outcome {
    let spec = warped_type9(0.0, 3, -1.0, true).unwrap().without_potential();
    let pts = sample_points(&spec, 100, SEED).unwrap();
    let r = certify_inverse(&spec, &pts, &Tolerances::default()).map_err(|e| e.to_string())?;
    for name in ["bochner_flat", "b0_shape", "b0_dk_collinear", "b0_p_star_formula"] {
        let c = r.check(name).unwrap();
        ensure(c.verdict == Verdict::Pass, || format!("{name}: max {:e}", c.max))?;
    }
    for name in ["a_plus_k2", "b0_constant"] {
        let c = r.constant(name).unwrap();
        ensure(c.verdict == Verdict::Pass, || format!("{name}: mean {:e}", c.mean))?;
    }
    let flat = r.check("ccc_flatness").unwrap();
    ensure(flat.max < THEOREM_TOL && flat.count == 100, || format!("flatness {:e}", flat.max))?;
    ensure(r.verdict == Verdict::Pass, || format!("verdict {:?}: {:?}", r.verdict, r.reason))?;
    Ok(format!("hypotheses certified, constructed connection max |curvature| {:.1e}", flat.max))
}

fn criterion_6() -> Outcome {
    let spec = warped_type9(0.0, 3, -1.0, false).unwrap();
    let mut worst = BTreeMap::<&str, f64>::new();
    for p in sample_points(&spec, 100, SEED).unwrap() {
        let b = curvature_bundle(&spec, &p).unwrap();
        let b0 = b0_residuals(&spec, &p).unwrap();
        let tau = b.tau;
        let s = (-tau / 20.0).sqrt();
        for (name, v) in [
            ("dtau_norm", relative(b.dtau_norm_sq + tau.powi(3) / 20.0, tau.powi(3))),
            ("laplace_tau", relative(b.laplace_tau + tau * tau / 4.0, tau * tau)),
            ("ricci_norm", relative(b.ricci_norm_sq - 3.0 * tau * tau / 16.0, tau * tau)),
            ("k", relative(b0.k + s, s)),
            ("p_star", relative(b0.p_star - 1.5 * s, s)),
        ] {
            ensure(v < THEOREM_TOL, || format!("{name}: {v:e} at {p:?}"))?;
            let e = worst.entry(name).or_insert(0.0);
            *e = e.max(v);
        }
    }
    Ok(worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", "))
}

fn criterion_7() -> Outcome {
    let cases = [
        ("perturbed_flat.json", "bochner", "bochner", "bochner_flat", None),
        ("flat_linear_potential.json", "theorem-forward", "flatness", "ccc_flatness", None),
        ("", "theorem-inverse", "inverse", "", Some("dτ = 0")),
    ];
    let mut codes = Vec::new();
    for (file, pipeline, block, check, reason) in cases {
        let path = data(file);
        let mut args = vec!["certify", "--pipeline", pipeline, "--points", "20", "--format", "json"];
        let path_str = path.to_string_lossy().into_owned();
        if file.is_empty() {
            args.extend(["--model", "space_form", "--param", "c=-4"]);
        } else {
            args.extend(["--file", path_str.as_str()]);
        }
        let (code, out, err) = kcert(&args, None);
        codes.push(code);
        ensure(code == 1, || format!("{pipeline} on {file:?}: exit {code}, {err}"))?;
        let report = parse_report(&out).map_err(|e| e.to_string())?;
        ensure(report.verdict == Verdict::Fail, || format!("{pipeline}: verdict {:?}", report.verdict))?;
        if !check.is_empty() {
            let c = report.check(block, check).ok_or(format!("missing {block}/{check}"))?;
            ensure(c.verdict == Verdict::Fail, || format!("{check} did not fail"))?;
        }
        if file == "flat_linear_potential.json" {
            let c = report.check("flatness", "lee_hessian").ok_or("missing lee_hessian")?;
            ensure(c.verdict == Verdict::Fail, || "Lee Hessian did not fail".into())?;
        }
        if let Some(r) = reason {
            ensure(report.reasons.iter().any(|x| x.starts_with(r)), || format!("reasons {:?}", report.reasons))?;
        }
    }
    Ok(format!("exit codes {codes:?}"))
}

fn fd_partial(spec: &ManifoldSpec, i: usize, j: usize, alpha: &[u8], p: &[f64]) -> f64 {
    let e = &spec.metric[i][j].expr;
    let f = |q: &[f64]| e.evaluate(q).unwrap();
    let dirs: Vec<usize> = alpha.iter().enumerate().flat_map(|(k, &m)| std::iter::repeat(k).take(m as usize)).collect();
    let h = FD_STEP;
    let shifted = |moves: &[(usize, f64)]| {
        let mut q = p.to_vec();
        for &(k, s) in moves {
            q[k] += s;
        }
        f(&q)
    };
    match dirs.as_slice() {
        [a] => (shifted(&[(*a, h)]) - shifted(&[(*a, -h)])) / (2.0 * h),
        [a, b] if a == b => (shifted(&[(*a, h)]) - 2.0 * f(p) + shifted(&[(*a, -h)])) / (h * h),
        [a, b] => {
            (shifted(&[(*a, h), (*b, h)]) - shifted(&[(*a, h), (*b, -h)]) - shifted(&[(*a, -h), (*b, h)])
                + shifted(&[(*a, -h), (*b, -h)]))
                / (4.0 * h * h)
        }
        _ => unreachable!(),
    }
}

fn criterion_8() -> Outcome {
    let models = [flat(3), space_form(-4.0, 3, false).unwrap(), warped_type9(0.0, 3, -1.0, false).unwrap()];
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for spec in &models {
        let d = spec.dim;
        let mut alphas: Vec<Vec<u8>> = Vec::new();
        for a in 0..d {
            let mut v = vec![0u8; d];
            v[a] = 1;
            alphas.push(v);
            for b in a..d {
                let mut w = vec![0u8; d];
                w[a] += 1;
                w[b] += 1;
                alphas.push(w);
            }
        }
        for p in sample_points(spec, 10, SEED).unwrap() {
            for i in 0..d {
                for j in 0..d {
                    for alpha in &alphas {
                        let exact = partial_derivative(&spec.metric[i][j].expr, alpha, &p).unwrap();
                        let fd = fd_partial(spec, i, j, alpha, &p);
                        let r = relative(exact - fd, exact);
                        ensure(r < FD_TOL, || {
                            format!("{} g[{i}][{j}] ∂^{alpha:?}: exact {exact} fd {fd}", spec.name)
                        })?;
                        worst = worst.max(r);
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{count} partials, max relative error {worst:.1e}"))
}

fn criterion_9() -> Outcome {
    let args = ["certify", "--model", "warped_type9", "--pipeline", "all", "--points", "100", "--seed", "7", "--format", "json"];
    let (c1, a, e1) = kcert(&args, None);
    let (c2, b, _) = kcert(&args, Some("1"));
    ensure(c1 == 0 && c2 == 0, || format!("exit codes {c1}, {c2}: {e1}"))?;
    ensure(!a.is_empty() && a == b, || "reports differ".into())?;
    let report = parse_report(&a).map_err(|e| e.to_string())?;
    let apk = report.constant("a_plus_k2").ok_or("no a_plus_k2 block")?;
    ensure(apk.mean.abs() < THEOREM_TOL, || format!("a + k² mean {:e}", apk.mean))?;
    Ok(format!("{} bytes identical across thread counts, exit 0", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("control zeros on flat C^3", criterion_1),
        ("space form c = -4 control", criterion_2),
        ("conformal curvature relation, 3 models x 2 potentials x 20 points", criterion_3),
        ("theorem forward direction on warped_type9", criterion_4),
        ("theorem inverse direction on warped_type9", criterion_5),
        ("specialized identities at n = 3", criterion_6),
        ("negative controls and exit codes", criterion_7),
        ("exact partials against central differences", criterion_8),
        ("deterministic JSON reports", criterion_9),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {title}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {title}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
