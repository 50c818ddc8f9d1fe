//! Acceptance run: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use convext::body_c1omega::{BodyC1Omega, BuildOptions, Construction};
use convext::envelope::{direct_concave_max, ConvexPiece, EnvelopeBackend, PieceFamily, QuadraticPiece, TangencyPiece};
use convext::feasibility::{check_c11, max_c11_radius, max_c1omega_delta};
use convext::fixtures::{gen_cusp_curve_data, gen_random_convex_data, gen_sphere_data, gen_stadium_data, RandomBody};
use convext::geometry::{norm2, sub};
use convext::sampling::{point_in_box, stream_rng};
use convext::verify::{verify_c11, verify_c11_with, verify_c1omega, verify_signed_distance, C11Options};
use convext::{BodyC11, Modulus, ModulusSpec, TangencyProblem, VerificationReport};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: convext::Error) -> String {
    e.to_string()
}

fn property<'a>(rep: &'a VerificationReport, name: &str) -> Result<&'a convext::PropertyRecord, String> {
    rep.property(name).ok_or_else(|| format!("missing record {name}"))
}

fn random_problems(count: usize, points: usize, seed: u64) -> Vec<TangencyProblem> {
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|i| {
            let body = if i % 2 == 0 {
                RandomBody::Ellipse {
                    a: rng.random_range(1.0..2.5),
                    b: rng.random_range(0.6..1.2),
                }
            } else {
                RandomBody::Ellipsoid {
                    a: rng.random_range(0.8..1.5),
                    b: rng.random_range(0.8..1.5),
                    c: rng.random_range(0.8..1.5),
                }
            };
            gen_random_convex_data(&body, points, 0.0, seed + i as u64).unwrap()
        })
        .collect()
}

fn sphere_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for dim in [2, 3] {
        let p = gen_sphere_data(100, dim, 1.0).map_err(err)?;
        let r = max_c11_radius(&p).map_err(err)?;
        ensure((r - 1.0).abs() <= 1e-12, || format!("dimension {dim}: r_max = {r}"))?;
        ensure(check_c11(&p, r).map_err(err)?.feasible, || "r_max not feasible".into())?;
        let body = BodyC11::build(&p, 1.0).map_err(err)?;
        let mut rng = stream_rng(1, dim as u64);
        for _ in 0..10_000 {
            let x = point_in_box(&mut rng, &vec![-2.0; dim], &vec![2.0; dim]);
            let e = (body.signed_distance(&x).map_err(err)? - (norm2(&x) - 1.0)).abs();
            worst = worst.max(e);
        }
    }
    ensure(worst <= 1e-9, || format!("|b_V - (|x| - 1)| = {worst:.3e}"))?;
    Ok(format!("max |b_V(x) - (|x| - 1)| = {worst:.2e} on 2 x 10^4 points"))
}

fn interpolation_contract() -> Outcome {
    let (mut wb, mut wn): (f64, f64) = (0.0, 0.0);
    for p in random_problems(20, 40, 100) {
        let r = 0.5 * max_c11_radius(&p).map_err(err)?;
        let body = BodyC11::build(&p, r).map_err(err)?;
        for d in &p.data {
            wb = wb.max(body.signed_distance(&d.point).map_err(err)?.abs());
            wn = wn.max(norm2(&sub(&body.boundary_normal(&d.point).map_err(err)?, &d.normal)));
        }
    }
    ensure(wb <= 1e-9 && wn <= 1e-7, || format!("|b_V(y)| = {wb:.3e}, |N_S - N| = {wn:.3e}"))?;
    Ok(format!("20 problems: max |b_V(y)| = {wb:.2e}, max |N_S(y) - N(y)| = {wn:.2e}"))
}

fn c11_bodies() -> Result<Vec<BodyC11>, String> {
    let mut out = vec![
        BodyC11::build(&gen_stadium_data(60, 2.0, 0.5).map_err(err)?, 0.5).map_err(err)?,
        BodyC11::build(&gen_sphere_data(30, 3, 1.0).map_err(err)?, 0.8).map_err(err)?,
    ];
    for p in random_problems(2, 30, 7) {
        let r = 0.7 * max_c11_radius(&p).map_err(err)?;
        out.push(BodyC11::build(&p, r).map_err(err)?);
    }
    Ok(out)
}

fn gauss_map_lipschitz() -> Outcome {
    let mut lines = Vec::new();
    for body in c11_bodies()? {
        let mut opts = C11Options::new(5_000, 11);
        opts.ball_samples = 8;
        let rep = verify_c11_with(&body, &opts).map_err(err)?;
        let rec = property(&rep, "gauss-map-lipschitz")?;
        let l = rec.measured_constant.unwrap_or(f64::INFINITY);
        ensure(rec.samples >= 10_000, || format!("only {} pairs", rec.samples))?;
        ensure(l <= 1.0 / body.radius + 1e-3, || format!("Lip = {l} > 1/r = {}", 1.0 / body.radius))?;
        lines.push(format!("{l:.4}/{:.4}", 1.0 / body.radius));
    }
    Ok(format!("Lip(N_S) vs 1/r over >= 10^4 pairs: {}", lines.join(", ")))
}

fn rolling_ball() -> Outcome {
    let bodies = c11_bodies()?;
    for body in &bodies {
        let mut opts = C11Options::new(1_000, 12);
        opts.ball_samples = 1_000;
        let rep = verify_c11_with(body, &opts).map_err(err)?;
        let rec = property(&rep, "rolling-ball")?;
        ensure(rec.passed, || format!("genuine body failed: margin {}", rec.worst_margin))?;
    }
    let mut forged = C11Options::new(1_000, 12);
    forged.ball_samples = 1_000;
    forged.radius = Some(1.5 * bodies[0].radius);
    let rep = verify_c11_with(&bodies[0], &forged).map_err(err)?;
    let rec = property(&rep, "rolling-ball")?;
    ensure(!rec.passed && !rec.witness.is_empty(), || "falsified radius was not caught".into())?;
    Ok(format!(
        "{} bodies pass at 0.99r with 10^3 x 10^3 samples; falsified radius fails, witness {:?}",
        bodies.len(),
        rec.witness[0]
    ))
}

fn signed_distance_suite() -> Outcome {
    let mut lines = Vec::new();
    for body in c11_bodies()?.into_iter().take(3) {
        let rep = verify_signed_distance(&body, 0.5, 10_000, 13).map_err(err)?;
        let conv = property(&rep, "signed-distance-convexity")?;
        let proj = property(&rep, "projection-identity")?;
        let lip = property(&rep, "signed-distance-gradient-lipschitz")?;
        let l = lip.measured_constant.unwrap_or(f64::INFINITY);
        ensure(conv.worst_margin >= -1e-10, || format!("convexity margin {}", conv.worst_margin))?;
        ensure(proj.worst_margin >= -1e-7, || format!("projection identity {}", proj.worst_margin))?;
        ensure(l <= 2.0 / body.radius + 1e-3, || format!("Lip(grad b_V) = {l}"))?;
        lines.push(format!("{:.1e}/{:.1e}/{l:.3}", conv.worst_margin, -proj.worst_margin));
    }
    Ok(format!("convexity margin / projection error / Lip on 10^4 segments: {}", lines.join(", ")))
}

fn fenchel_suite() -> Outcome {
    let mut rng = stream_rng(14, 0);
    let mut worst: f64 = 0.0;
    for k in [0.5, 1.0, 2.0] {
        for alpha in [0.25, 0.5, 1.0] {
            let m = Modulus::power(k, alpha).map_err(err)?;
            for _ in 0..100 {
                let d = rng.random_range(1e-3..10.0);
                let inv = m.omega_inverse(d).map_err(err)?;
                let e = (m.phi(inv).map_err(err)? + m.phi_conjugate(d).map_err(err)? - d * inv).abs();
                ensure(e <= 1e-8 * (1.0f64).max(d * inv), || format!("K={k} alpha={alpha} delta={d}: {e:.3e}"))?;
                worst = worst.max(e / (1.0f64).max(d * inv));
            }
            for _ in 0..1_000 {
                let t: f64 = rng.random_range(1e-4..100.0);
                let phi = |s: f64| m.phi(s).unwrap();
                let omega = |s: f64| m.omega(s).unwrap();
                ensure(phi(2.0 * t) > t * omega(t), || format!("phi(2t) > t omega(t) at t={t}"))?;
                ensure(2.0 * t * omega(t) >= phi(2.0 * t) * (1.0 - 1e-12), || format!("2t omega(t) >= phi(2t) at t={t}"))?;
                ensure(phi(t) >= 0.5 * t * omega(0.5 * t) * (1.0 - 1e-12), || format!("phi(t) >= t/2 omega(t/2) at t={t}"))?;
            }
        }
    }
    Ok(format!("9 moduli x 100 delta, worst relative residual {worst:.2e}; 3 inequalities on 9 x 10^3 t"))
}

fn c1omega_identities() -> Outcome {
    let p = gen_random_convex_data(&RandomBody::Ellipse { a: 1.6, b: 1.0 }, 24, 0.0, 15).map_err(err)?;
    let spec = ModulusSpec::Power { k: 1.0, alpha: 0.5 };
    let modulus = Modulus::new(spec.clone()).map_err(err)?;
    let delta = 0.5 * max_c1omega_delta(&p, &modulus).map_err(err)?;
    let opts = BuildOptions {
        backend: EnvelopeBackend::direct(),
        cross_check_points: 1_000,
        seed: 15,
    };
    let body = BodyC1Omega::build(&p, &Construction::Hilbert { modulus: spec, delta }, &opts).map_err(err)?;
    let cv = body.cross_check().ok_or("no cross-check")?;
    let (mut fv, mut fg): (f64, f64) = (0.0, 0.0);
    for d in &p.data {
        let e = body.evaluate(&d.point).map_err(err)?;
        fv = fv.max((e.value - 1.0).abs());
        fg = fg.max(norm2(&sub(&e.gradient, &d.normal)));
    }
    let min_f = body
        .minimizers()
        .vertices
        .iter()
        .map(|z| body.eval_f(z))
        .collect::<convext::Result<Vec<f64>>>()
        .map_err(err)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let want = 1.0 - modulus.phi_conjugate(delta).map_err(err)? / delta;
    let rep = body.level_set_bounds_check(1_000, 15).map_err(err)?;
    ensure(fv <= 1e-5 && fg <= 1e-4, || format!("|F(y) - 1| = {fv:.3e}, |grad F - N| = {fg:.3e}"))?;
    ensure((min_f - want).abs() <= 1e-5, || format!("min F = {min_f}, expected {want}"))?;
    ensure(rep.lower_holds, || format!("min |grad F| = {} < {}", rep.min_gradient, rep.lower_bound))?;
    Ok(format!(
        "|F(y)-1| = {fv:.1e}, |grad F(y)-N| = {fg:.1e}, |min F - (1 - phi*/delta)| = {:.1e}, min |grad F| = {:.4} >= {:.4} on 10^3 samples, 513^2 lattice agrees to {:.1e}",
        (min_f - want).abs(),
        rep.min_gradient,
        rep.lower_bound,
        cv.max_difference
    ))
}

/// Andrew's monotone chain, lower part.
fn lower_hull(xs: &[f64], fs: &[f64]) -> Vec<(f64, f64)> {
    let mut h: Vec<(f64, f64)> = Vec::new();
    for (&x, &f) in xs.iter().zip(fs) {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            if (b.0 - a.0) * (f - a.1) - (b.1 - a.1) * (x - a.0) <= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push((x, f));
    }
    h
}

fn backend_agreement() -> Outcome {
    let half = Modulus::power(1.0, 0.5).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (i, p) in random_problems(20, 12, 16).into_iter().step_by(2).enumerate() {
        let delta = 0.5 * max_c1omega_delta(&p, &half).map_err(err)?;
        let opts = BuildOptions {
            backend: EnvelopeBackend::direct(),
            cross_check_points: 1_000,
            seed: i as u64,
        };
        let c = Construction::Hilbert {
            modulus: ModulusSpec::Power { k: 1.0, alpha: 0.5 },
            delta,
        };
        let body = BodyC1Omega::build(&p, &c, &opts).map_err(err)?;
        worst = worst.max(body.cross_check().map(|c| c.max_difference).unwrap_or(f64::INFINITY));
    }
    // One-dimensional oracle.
    let m = Arc::new(Modulus::power(1.0, 0.5).map_err(err)?);
    let fam = PieceFamily::new(vec![
        Box::new(QuadraticPiece {
            center: vec![-1.0],
            curvature: 1.0,
            linear: vec![0.0],
            offset: 0.0,
        }) as Box<dyn ConvexPiece>,
        Box::new(TangencyPiece {
            point: vec![1.5],
            normal: vec![1.0],
            delta: 0.5,
            modulus: m,
        }),
    ])
    .map_err(err)?;
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|i| -6.0 + 12.0 * i as f64 / (n - 1) as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| fam.min_value(&[x]).0).collect();
    let hull = lower_hull(&xs, &fs);
    let mut hull_err: f64 = 0.0;
    for k in 0..=500 {
        let x = -3.0 + 6.0 * k as f64 / 500.0;
        let j = hull.partition_point(|p| p.0 <= x).clamp(1, hull.len() - 1);
        let (a, b) = (hull[j - 1], hull[j]);
        let oracle = a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
        let v = direct_concave_max(&fam, &[x], 1e-12, 10_000).map_err(err)?.value;
        hull_err = hull_err.max((v - oracle).abs());
    }
    ensure(hull_err <= 1e-6, || format!("1D hull error {hull_err:.3e}"))?;
    Ok(format!(
        "10 problems x 10^3 points within max(1e-4, 2 cell L), worst difference {worst:.2e}; 1D hull oracle error {hull_err:.2e}"
    ))
}

fn cusp_dichotomy() -> Outcome {
    let half = Modulus::power(1.0, 0.5).map_err(err)?;
    let mut rs = Vec::new();
    let mut ds = Vec::new();
    for h in [1e-1, 1e-2, 1e-3, 1e-4] {
        let p = gen_cusp_curve_data(h, 1.0, 8).map_err(err)?;
        let r = max_c11_radius(&p).map_err(err)?;
        ensure(r <= h.sqrt(), || format!("r_max({h}) = {r} exceeds h^(1/2)"))?;
        rs.push(r);
        ds.push(max_c1omega_delta(&p, &half).map_err(err)?);
    }
    ensure(rs.windows(2).all(|w| w[1] < w[0]), || format!("r_max not decreasing: {rs:?}"))?;
    ensure(rs[3] < 1e-2, || format!("r_max(1e-4) = {}", rs[3]))?;
    let dmin = ds.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(dmin > 0.1, || format!("delta_max = {ds:?}"))?;
    Ok(format!(
        "r_max = [{}], delta_max(1/2) = [{}]",
        rs.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", "),
        ds.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
    ))
}

fn determinism() -> Outcome {
    let body = BodyC11::build(&gen_stadium_data(40, 2.0, 0.5).map_err(err)?, 0.5).map_err(err)?;
    let run = || -> Result<String, String> {
        let a = verify_c11(&body, 500, 42).map_err(err)?;
        let b = verify_signed_distance(&body, 0.5, 500, 42).map_err(err)?;
        serde_json::to_string_pretty(&(a, b)).map_err(|e| e.to_string())
    };
    let (x, y) = (run()?, run()?);
    ensure(x == y, || "C11 reports differ".into())?;
    let c = Construction::Hilbert {
        modulus: ModulusSpec::Power { k: 1.0, alpha: 1.0 },
        delta: 0.5,
    };
    let b = BodyC1Omega::build(&gen_sphere_data(8, 2, 1.0).map_err(err)?, &c, &BuildOptions::default()).map_err(err)?;
    let u = serde_json::to_string_pretty(&verify_c1omega(&b, 100, 42).map_err(err)?).map_err(|e| e.to_string())?;
    let v = serde_json::to_string_pretty(&verify_c1omega(&b, 100, 42).map_err(err)?).map_err(|e| e.to_string())?;
    ensure(u == v, || "C1omega reports differ".into())?;
    Ok(format!("{} + {} bytes identical across runs", x.len(), u.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("sphere round trip", Duration::from_secs(1), sphere_round_trip),
        ("interpolation contract", Duration::from_secs(10), interpolation_contract),
        ("gauss-map lipschitz bound", Duration::from_secs(30), gauss_map_lipschitz),
        ("rolling ball", Duration::from_secs(60), rolling_ball),
        ("signed-distance suite", Duration::from_secs(30), signed_distance_suite),
        ("fenchel identity suite", Duration::from_secs(1), fenchel_suite),
        ("c1omega construction identities", Duration::from_secs(120), c1omega_identities),
        ("envelope backend agreement", Duration::from_secs(60), backend_agreement),
        ("cusp dichotomy", Duration::from_secs(10), cusp_dichotomy),
        ("determinism", Duration::from_secs(10), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > *budget => Err(format!("{detail}; took {took:.2?} > {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
