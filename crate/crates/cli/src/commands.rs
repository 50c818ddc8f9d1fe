//! Subcommand implementations.

use std::fs;
use std::path::Path;

use serde::Serialize;

use convext::body_c1omega::{BodyC1Omega, BuildOptions, Construction};
use convext::envelope::{default_grid_resolution, EnvelopeBackend};
use convext::export::{export_csv, export_obj, export_polyline};
use convext::feasibility::{
    check_c11, check_c1alpha_dual, check_c1omega, scan_c11, scan_c1alpha_dual, scan_c1omega, FeasibilityReport,
};
use convext::fixtures::{FixtureSpec, RandomBody};
use convext::geometry::{dist2, norm2, sub};
use convext::sampling::{ClipBox, SamplingOptions};
use convext::verify::{verify_c11_with, verify_c1omega_with, verify_signed_distance, C11Options, C1OmegaOptions};
use convext::{Body, BodyC11, BodyFile, Error, Modulus, ModulusSpec, ProblemFile, TangencyProblem, VerificationReport};

use crate::{Backend, Class, ClassArgs, Command, ExportFormat, FixtureKind};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Input(_) | Error::Domain(_) => 1,
            Error::Infeasible { .. } | Error::DuplicatePoint { .. } => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_problem(path: &Path) -> Result<(ProblemFile, TangencyProblem), Failure> {
    let file = ProblemFile::parse(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let problem = file
        .to_problem()
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok((file, problem))
}

fn load_body(path: &Path) -> Result<Body, Failure> {
    let file = BodyFile::parse(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(file.into_body()?)
}

/// Modulus from `--K` / `--alpha`, else the problem file, else `omega(t) = t`.
fn modulus_spec(args: &ClassArgs, file: Option<&ProblemFile>) -> ModulusSpec {
    let from_file = file.and_then(|f| f.modulus.clone());
    if args.k.is_none() && args.alpha.is_none() {
        if let Some(spec) = from_file {
            return spec;
        }
    }
    let (fk, fa) = match &from_file {
        Some(ModulusSpec::Power { k, alpha }) => (*k, *alpha),
        _ => (1.0, 1.0),
    };
    ModulusSpec::Power {
        k: args.k.unwrap_or(fk),
        alpha: args.alpha.unwrap_or(fa),
    }
}

/// Exponent for the dual construction.
fn dual_alpha(args: &ClassArgs, file: &ProblemFile) -> Result<f64, Failure> {
    if let Some(a) = args.alpha {
        return Ok(a);
    }
    match &file.modulus {
        Some(ModulusSpec::Power { alpha, .. }) => Ok(*alpha),
        Some(_) => Err(Failure::input("c1alpha needs a power modulus (give --alpha)")),
        None => Ok(1.0),
    }
}

fn diameter(problem: &TangencyProblem) -> f64 {
    let pts = problem.points();
    let mut d: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[..i] {
            d = d.max(dist2(p, q));
        }
    }
    d
}

fn scan(class: Class, problem: &TangencyProblem, args: &ClassArgs, file: &ProblemFile) -> Result<FeasibilityReport, Failure> {
    Ok(match class {
        Class::C11 => scan_c11(problem)?,
        Class::C1omega => scan_c1omega(problem, &Modulus::new(modulus_spec(args, Some(file)))?)?,
        Class::C1alpha => scan_c1alpha_dual(problem, dual_alpha(args, file)?)?,
    })
}

fn check(class: Class, problem: &TangencyProblem, args: &ClassArgs, file: &ProblemFile, c: f64) -> Result<FeasibilityReport, Failure> {
    Ok(match class {
        Class::C11 => check_c11(problem, c)?,
        Class::C1omega => check_c1omega(problem, &Modulus::new(modulus_spec(args, Some(file)))?, c)?,
        Class::C1alpha => check_c1alpha_dual(problem, dual_alpha(args, file)?, c)?,
    })
}

fn requested_constant(class: Class, args: &ClassArgs, file: &ProblemFile) -> Option<f64> {
    let params = file.construction.clone().unwrap_or_default();
    match class {
        Class::C11 => args.radius.or(params.r),
        Class::C1omega | Class::C1alpha => args.delta.or(params.delta),
    }
}

fn constant_name(class: Class) -> &'static str {
    match class {
        Class::C11 => "r",
        Class::C1omega | Class::C1alpha => "delta",
    }
}

#[derive(Serialize)]
struct FeasibilityOutput<'a> {
    class: &'a str,
    constant: &'a str,
    extremal_constant: f64,
    tested_constant: f64,
    feasible: bool,
    violating_pair: Option<(usize, usize)>,
    worst_margin: f64,
    scan: &'a FeasibilityReport,
}

fn class_name(class: Class) -> &'static str {
    match class {
        Class::C11 => "c11",
        Class::C1omega => "c1omega",
        Class::C1alpha => "c1alpha",
    }
}

fn cmd_feasibility(path: &Path, args: &ClassArgs, tol: f64, out: Option<&Path>) -> Outcome {
    let (file, problem) = load_problem(path)?;
    if !(tol > 0.0) {
        return Err(Failure::input("--tol must be positive"));
    }
    let class = args.class;
    let sharp = scan(class, &problem, args, &file)?;
    let tested = requested_constant(class, args, &file).unwrap_or(match class {
        Class::C11 => tol * diameter(&problem).max(1.0),
        _ => tol,
    });
    let rep = check(class, &problem, args, &file, tested)?;
    let output = FeasibilityOutput {
        class: class_name(class),
        constant: if class == Class::C11 { "r_max" } else { "delta_max" },
        extremal_constant: sharp.extremal_constant,
        tested_constant: tested,
        feasible: rep.feasible,
        violating_pair: rep.violating_pair,
        worst_margin: rep.worst_margin,
        scan: &sharp,
    };
    emit(out, &json(&output))?;
    eprintln!(
        "{} = {}; tested {} = {tested}: {}",
        output.constant,
        sharp.extremal_constant,
        constant_name(class),
        if rep.feasible { "feasible" } else { "infeasible" }
    );
    if rep.feasible {
        Ok(0)
    } else {
        if let Some((i, j)) = rep.violating_pair {
            eprintln!("violating pair ({i}, {j})");
        }
        Ok(2)
    }
}

/// Interpolation identities checked right after construction.
fn smoke_check(body: &Body) -> Result<(), Failure> {
    let source = body.source();
    for (i, d) in source.data.iter().enumerate() {
        let (value_err, normal_err, value_tol, normal_tol) = match body {
            Body::C11(b) => (
                b.signed_distance(&d.point)?.abs(),
                norm2(&sub(&b.signed_distance_gradient(&d.point)?, &d.normal)),
                1e-9,
                1e-7,
            ),
            Body::C1Omega(b) => {
                let e = b.evaluate(&d.point)?;
                ((e.value - 1.0).abs(), norm2(&sub(&e.gradient, &d.normal)), 1e-5, 1e-4)
            }
        };
        if value_err > value_tol || normal_err > normal_tol {
            return Err(Failure {
                code: 3,
                message: format!(
                    "post-build check failed at datum {i}: value error {value_err:e}, normal error {normal_err:e}"
                ),
            });
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_build(
    path: &Path,
    args: &ClassArgs,
    auto: bool,
    backend: Backend,
    resolution: Option<usize>,
    cross_check: usize,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    let (file, problem) = load_problem(path)?;
    let class = args.class;
    let constant = match requested_constant(class, args, &file) {
        Some(c) => c,
        None if auto => {
            let sharp = scan(class, &problem, args, &file)?.extremal_constant;
            if !sharp.is_finite() {
                return Err(Failure::input(format!(
                    "the data do not bound {}; give it explicitly",
                    constant_name(class)
                )));
            }
            if !(sharp > 0.0) {
                eprintln!("infeasible: sharp constant {sharp}");
                return Ok(2);
            }
            0.5 * sharp
        }
        None => {
            return Err(Failure::input(format!(
                "give --{} or --auto",
                if class == Class::C11 { "radius" } else { "delta" }
            )))
        }
    };
    let backend = match backend {
        Backend::Direct => EnvelopeBackend::direct(),
        Backend::Grid => EnvelopeBackend::grid(resolution.unwrap_or_else(|| default_grid_resolution(problem.dimension()))),
    };
    let opts = BuildOptions {
        backend,
        cross_check_points: cross_check,
        seed,
    };
    let body = match class {
        Class::C11 => Body::C11(BodyC11::build(&problem, constant)?),
        Class::C1omega => {
            let construction = Construction::Hilbert {
                modulus: modulus_spec(args, Some(&file)),
                delta: constant,
            };
            Body::C1Omega(BodyC1Omega::build(&problem, &construction, &opts)?)
        }
        Class::C1alpha => {
            let construction = Construction::DualAlpha {
                alpha: dual_alpha(args, &file)?,
                delta: constant,
            };
            Body::C1Omega(BodyC1Omega::build(&problem, &construction, &opts)?)
        }
    };
    smoke_check(&body)?;
    match &body {
        Body::C11(b) => eprintln!("built c11 body with r = {}", b.radius),
        Body::C1Omega(b) => {
            eprintln!("built {} body with delta = {}; inf F = {}", class_name(class), b.delta(), b.minimum_value());
            if let Some(cv) = b.cross_check() {
                eprintln!(
                    "envelope cross-check: {} points, max difference {:e}",
                    cv.points, cv.max_difference
                );
            }
        }
    }
    let mut body_file = BodyFile::from_body(&body);
    let (BodyFile::C11 { problem: p, .. } | BodyFile::C1omega { problem: p, .. } | BodyFile::C1alpha { problem: p, .. }) =
        &mut body_file;
    p.fixture = file.fixture.clone();
    emit(out, &body_file.to_json())?;
    Ok(0)
}

#[derive(Serialize)]
struct VerifyOutput {
    class: String,
    passed: bool,
    reports: Vec<VerificationReport>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    path: &Path,
    seed: u64,
    samples: usize,
    epsilon: f64,
    radius: Option<f64>,
    alpha: Option<f64>,
    k: Option<f64>,
    refine: u32,
    out: Option<&Path>,
) -> Outcome {
    let body = load_body(path)?;
    let mut reports = Vec::new();
    for level in 0..=refine {
        let n = samples
            .checked_mul(1usize << level.min(20))
            .ok_or_else(|| Failure::input("sample count overflows"))?;
        match &body {
            Body::C11(b) => {
                let mut opts = C11Options::new(n, seed);
                opts.radius = radius;
                reports.push(verify_c11_with(b, &opts)?);
                reports.push(verify_signed_distance(b, epsilon, n, seed)?);
            }
            Body::C1Omega(b) => {
                let mut opts = C1OmegaOptions::new(n, seed);
                if alpha.is_some() || k.is_some() {
                    let (k0, a0) = b.modulus().power_parameters().unwrap_or((1.0, 1.0));
                    opts.modulus = Some(Modulus::power(k.unwrap_or(k0), alpha.unwrap_or(a0))?);
                }
                reports.push(verify_c1omega_with(b, &opts)?);
            }
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let output = VerifyOutput {
        class: match body {
            Body::C11(_) => "c11".into(),
            Body::C1Omega(_) => "c1omega".into(),
        },
        passed,
        reports,
    };
    emit(out, &json(&output))?;
    if passed {
        eprintln!("all properties pass");
        return Ok(0);
    }
    for r in &output.reports {
        for p in r.failures() {
            eprintln!(
                "FAIL {} ({} samples): worst margin {:e}, witness {:?}",
                p.name, r.samples, p.worst_margin, p.witness
            );
        }
    }
    Ok(2)
}

fn parse_clip(spec: Option<&str>, n: usize) -> Result<Option<ClipBox>, Failure> {
    let Some(spec) = spec else { return Ok(None) };
    let (lo, hi) = spec
        .split_once(':')
        .ok_or_else(|| Failure::input("--clip-box expects lo1,lo2,..:hi1,hi2,.."))?;
    let parse = |s: &str| -> Result<Vec<f64>, Failure> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Failure::input(format!("--clip-box: {e}"))))
            .collect()
    };
    let (lower, upper) = (parse(lo)?, parse(hi)?);
    if lower.len() != n || upper.len() != n {
        return Err(Failure::input(format!("--clip-box needs {n} coordinates per corner")));
    }
    if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
        return Err(Failure::input("--clip-box lower corner must lie below the upper corner"));
    }
    Ok(Some(ClipBox { lower, upper }))
}

fn cmd_export(path: &Path, format: ExportFormat, count: usize, seed: u64, clip: Option<&str>, out: Option<&Path>) -> Outcome {
    let body = load_body(path)?;
    let text = match format {
        ExportFormat::Polyline => export_polyline(&body, count)?,
        ExportFormat::Obj => export_obj(&body, count)?,
        ExportFormat::Csv => {
            let opts = SamplingOptions {
                interior: None,
                clip: parse_clip(clip, body.dimension())?,
            };
            export_csv(&body, count, seed, &opts)?
        }
    };
    emit(out, &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct SampleRow {
    point: Vec<f64>,
    normal: Vec<f64>,
}

fn cmd_sample(path: &Path, count: usize, seed: u64, clip: Option<&str>, out: Option<&Path>) -> Outcome {
    let body = load_body(path)?;
    let opts = SamplingOptions {
        interior: None,
        clip: parse_clip(clip, body.dimension())?,
    };
    let pts = body.sample_boundary_with(count, seed, &opts)?;
    let rows = pts
        .into_iter()
        .map(|p| Ok(SampleRow { normal: body.normal(&p)?, point: p }))
        .collect::<Result<Vec<_>, Error>>()?;
    emit(out, &json(&rows))?;
    Ok(0)
}

fn cmd_fixture(kind: &FixtureKind, out: Option<&Path>) -> Outcome {
    let spec = match *kind {
        FixtureKind::Sphere {
            points,
            dimension,
            radius,
        } => FixtureSpec::Sphere {
            points,
            dimension,
            radius,
        },
        FixtureKind::Cusp { h_min, h_max, count } => FixtureSpec::Cusp { h_min, h_max, count },
        FixtureKind::Ellipse {
            a,
            b,
            points,
            noise,
            seed,
        } => FixtureSpec::Random {
            body: RandomBody::Ellipse { a, b },
            points,
            noise,
            seed,
        },
        FixtureKind::Stadium { points, length, radius } => FixtureSpec::Stadium { points, length, radius },
    };
    let problem = spec.generate()?;
    let mut file = ProblemFile::from_problem(&problem);
    file.fixture = Some(spec);
    emit(out, &file.to_json())?;
    Ok(0)
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Feasibility {
            problem,
            class,
            tol,
            out,
        } => cmd_feasibility(&problem, &class, tol, out.as_deref()),
        Command::Build {
            problem,
            class,
            auto,
            backend,
            resolution,
            cross_check,
            seed,
            out,
        } => cmd_build(&problem, &class, auto, backend, resolution, cross_check, seed, out.as_deref()),
        Command::Verify {
            body,
            seed,
            samples,
            epsilon,
            radius,
            alpha,
            k,
            refine,
            out,
        } => cmd_verify(&body, seed, samples, epsilon, radius, alpha, k, refine, out.as_deref()),
        Command::Export {
            body,
            format,
            count,
            seed,
            clip_box,
            out,
        } => cmd_export(&body, format, count, seed, clip_box.as_deref(), out.as_deref()),
        Command::Sample {
            body,
            count,
            seed,
            clip_box,
            out,
        } => cmd_sample(&body, count, seed, clip_box.as_deref(), out.as_deref()),
        Command::Fixture { kind, out } => cmd_fixture(&kind, out.as_deref()),
    }
}
