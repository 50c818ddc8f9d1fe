//! Sampled characterization suites for constructed bodies.
//!
//! Each check draws seeded samples, evaluates an inequality or identity and
//! records the worst margin, the constant it measured and a witness for the
//! worst sample. Sampled suprema are lower bounds of the true suprema; the
//! sample streams extend as the count grows, so measured constants never
//! decrease under refinement with a fixed seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_c11::BodyC11;
use crate::body_c1omega::{BodyC1Omega, Variant};
use crate::error::{Error, Result};
use crate::geometry::{axpy, dist2, dot, norm2, scale, sub, NormSpace};
use crate::modulus::Modulus;
use crate::sampling::{point_in_box, stream_rng, unit_vector};

/// Tolerance ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub identity: f64,
    pub finite_difference: f64,
    pub lipschitz: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-9,
            finite_difference: 1e-5,
            lipschitz: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub name: String,
    /// What the check asserts, in words.
    pub statement: String,
    pub samples: usize,
    /// Smallest observed `rhs - lhs` slack; negative values are violations.
    pub worst_margin: f64,
    pub measured_constant: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub witness: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub seed: u64,
    pub samples: usize,
    pub tolerances: Tolerances,
    pub passed: bool,
    pub properties: Vec<PropertyRecord>,
}

impl VerificationReport {
    fn new(suite: &str, seed: u64, samples: usize, tolerances: Tolerances, properties: Vec<PropertyRecord>) -> Self {
        let passed = properties.iter().all(|p| p.passed);
        VerificationReport {
            suite: suite.into(),
            seed,
            samples,
            tolerances,
            passed,
            properties,
        }
    }

    pub fn property(&self, name: &str) -> Option<&PropertyRecord> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn failures(&self) -> Vec<&PropertyRecord> {
        self.properties.iter().filter(|p| !p.passed).collect()
    }
}

/// Running worst margin with its witness.
struct Tracker {
    worst: f64,
    witness: Vec<Vec<f64>>,
    count: usize,
    constant: Option<f64>,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            worst: f64::INFINITY,
            witness: Vec::new(),
            count: 0,
            constant: None,
        }
    }

    fn observe(&mut self, margin: f64, witness: &[&[f64]]) {
        self.count += 1;
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < self.worst {
            self.worst = margin;
            self.witness = witness.iter().map(|w| w.to_vec()).collect();
        }
    }

    fn sup(&mut self, v: f64) {
        if v.is_finite() || v.is_nan() {
            self.constant = Some(self.constant.map_or(v, |c: f64| c.max(v)));
        } else {
            self.constant = Some(f64::INFINITY);
        }
    }

    fn finish(self, name: &str, statement: &str, tolerance: f64) -> PropertyRecord {
        let worst = if self.count == 0 { 0.0 } else { self.worst };
        PropertyRecord {
            name: name.into(),
            statement: statement.into(),
            samples: self.count,
            worst_margin: worst,
            measured_constant: self.constant,
            tolerance,
            passed: worst >= -tolerance,
            witness: if worst < -tolerance { self.witness } else { Vec::new() },
            note: None,
        }
    }
}

/// Pairs `(i, j)` with `j < i`: a seeded random earlier index and the
/// nearest earlier point. Pairs for a prefix are a prefix of the pairs.
pub fn sample_pairs(points: &[Vec<f64>], seed: u64) -> Vec<(usize, usize)> {
    let rows: Vec<Vec<(usize, usize)>> = (1..points.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, 0x9a1u64 << 32 | i as u64);
            let j = rng.random_range(0..i);
            let near = (0..i)
                .min_by(|&a, &b| {
                    dist2(&points[a], &points[i])
                        .partial_cmp(&dist2(&points[b], &points[i]))
                        .unwrap()
                })
                .unwrap();
            if near == j {
                vec![(i, j)]
            } else {
                vec![(i, j), (i, near)]
            }
        })
        .collect();
    rows.into_iter().flatten().collect()
}

fn collect<T: Send>(v: Vec<Result<T>>) -> Result<Vec<T>> {
    v.into_iter().collect()
}

/// Options for [`verify_c11_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct C11Options {
    pub samples: usize,
    pub seed: u64,
    /// Points drawn on each rolling sphere.
    pub ball_samples: usize,
    /// Radius the body is checked against; defaults to its own.
    pub radius: Option<f64>,
    pub tolerances: Tolerances,
}

impl C11Options {
    pub fn new(samples: usize, seed: u64) -> Self {
        C11Options {
            samples,
            seed,
            ball_samples: 64,
            radius: None,
            tolerances: Tolerances::default(),
        }
    }
}

pub fn verify_c11(body: &BodyC11, samples: usize, seed: u64) -> Result<VerificationReport> {
    verify_c11_with(body, &C11Options::new(samples, seed))
}

/// Rolling balls, the Lipschitz bound and normal inequality for the Gauss
/// map, interpolation of the data, and the gradient of the gauge.
pub fn verify_c11_with(body: &BodyC11, opts: &C11Options) -> Result<VerificationReport> {
    if opts.samples < 2 {
        return Err(Error::Input("verification needs at least 2 samples".into()));
    }
    let tol = &opts.tolerances;
    let r = opts.radius.unwrap_or(body.radius);
    if !(r > 0.0) {
        return Err(Error::Input("radius must be positive".into()));
    }
    let mut records = Vec::new();

    // Interpolation of the data by the boundary.
    let mut interp_b = Tracker::new();
    let mut interp_n = Tracker::new();
    for d in &body.source.data {
        let b = body.signed_distance(&d.point)?;
        interp_b.observe(-b.abs(), &[&d.point]);
        let n = body.signed_distance_gradient(&d.point)?;
        interp_n.observe(-norm2(&sub(&n, &d.normal)), &[&d.point, &d.normal]);
    }
    records.push(interp_b.finish(
        "interpolation-boundary",
        "every datum lies on the boundary: |b_V(y)| <= tol",
        tol.identity,
    ));
    records.push(interp_n.finish(
        "interpolation-normal",
        "the outer normal at each datum is the prescribed one",
        1e-7,
    ));

    // Boundary samples: the data first, then ray casts.
    let cast = body.sample_boundary(opts.samples, opts.seed)?;
    let normals: Vec<Vec<f64>> = collect(cast.par_iter().map(|s| body.boundary_normal(s)).collect())?;
    let mut pts: Vec<Vec<f64>> = body.source.points();
    let mut nrm: Vec<Vec<f64>> = body.source.data.iter().map(|d| d.normal.clone()).collect();
    pts.extend(cast);
    nrm.extend(normals);
    let pairs = sample_pairs(&pts, opts.seed);

    let mut lip = Tracker::new();
    let mut ineq = Tracker::new();
    for &(i, j) in &pairs {
        let dn = norm2(&sub(&nrm[i], &nrm[j]));
        let dx = norm2(&sub(&pts[i], &pts[j]));
        if dx > 0.0 {
            let ratio = dn / dx;
            lip.sup(ratio);
            lip.observe(1.0 / r - ratio, &[&pts[i], &pts[j]]);
        }
        for (a, b) in [(i, j), (j, i)] {
            let lhs = dot(&nrm[a], &sub(&pts[a], &pts[b]));
            ineq.observe(lhs - 0.5 * r * dn * dn, &[&pts[a], &pts[b]]);
        }
    }
    records.push(lip.finish(
        "gauss-map-lipschitz",
        "|N_S(s) - N_S(t)| <= |s - t| / r on sampled boundary pairs",
        tol.lipschitz,
    ));
    records.push(ineq.finish(
        "normal-inequality",
        "<N_S(t), t - s> >= (r/2) |N_S(s) - N_S(t)|^2 on sampled boundary pairs",
        tol.identity,
    ));

    // Rolling balls of radius 0.99 r.
    let rho = 0.99 * r;
    let ball_rows: Vec<Result<(f64, usize, Vec<f64>)>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let c = axpy(&pts[i], -rho, &nrm[i]);
            let mut rng = stream_rng(opts.seed, 0xba11u64 << 32 | i as u64);
            let mut worst = f64::INFINITY;
            let mut wit = c.clone();
            for _ in 0..opts.ball_samples {
                let u = unit_vector(&mut rng, c.len());
                let p = axpy(&c, rho, &u);
                let m = -body.signed_distance(&p)?;
                if m < worst {
                    worst = m;
                    wit = p;
                }
            }
            Ok((worst, i, wit))
        })
        .collect();
    let mut ball = Tracker::new();
    for row in ball_rows {
        let (m, i, wit) = row?;
        ball.count += opts.ball_samples.saturating_sub(1);
        ball.observe(m, &[&pts[i], &wit]);
    }
    let centers: Vec<Vec<f64>> = (0..pts.len()).map(|i| axpy(&pts[i], -rho, &nrm[i])).collect();
    let sphere_rows: Vec<(f64, usize, usize)> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, i, i);
            for (j, t) in pts.iter().enumerate() {
                if dist2(t, &pts[i]) > 1e-9 * (1.0 + r) {
                    let m = dist2(t, &centers[i]) - rho;
                    if m < best.0 {
                        best = (m, i, j);
                    }
                }
            }
            best
        })
        .collect();
    for (m, i, j) in sphere_rows {
        if m.is_finite() {
            ball.observe(m, &[&pts[i], &pts[j]]);
        }
    }
    records.push(ball.finish(
        "rolling-ball",
        "for each boundary sample s, B(s - 0.99r N_S(s), 0.99r) lies in V and its sphere meets the samples only at s",
        tol.identity,
    ));

    records.push(gauge_record(body, &pts, opts)?);
    Ok(VerificationReport::new("c11", opts.seed, opts.samples, tol.clone(), records))
}

fn gauge_record(body: &BodyC11, pts: &[Vec<f64>], opts: &C11Options) -> Result<PropertyRecord> {
    let statement = "the gauge about the data centroid has Lipschitz gradient on {mu >= 1/2}; its gradient formula matches finite differences";
    let o = body.source.points();
    let n = body.dimension();
    let mut origin = vec![0.0; n];
    for p in &o {
        for k in 0..n {
            origin[k] += p[k] / o.len() as f64;
        }
    }
    if body.signed_distance(&origin)? >= -1e-6 {
        let mut rec = Tracker::new().finish("gauge-gradient", statement, opts.tolerances.finite_difference);
        rec.note = Some("skipped: the data centroid is not interior".into());
        return Ok(rec);
    }
    let mut rng = stream_rng(opts.seed, 0x9a09e);
    let xs: Vec<Vec<f64>> = pts
        .iter()
        .map(|s| axpy(&origin, rng.random_range(0.5..2.0), &sub(s, &origin)))
        .collect();
    let h = 1e-6 * (1.0 + norm2(&origin));
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = xs
        .par_iter()
        .map(|x| {
            let g = body.gauge_gradient(x, &origin)?;
            let mut fd = vec![0.0; n];
            for k in 0..n {
                let mut a = x.clone();
                let mut b = x.clone();
                a[k] += h;
                b[k] -= h;
                fd[k] = (body.gauge(&a, &origin)? - body.gauge(&b, &origin)?) / (2.0 * h);
            }
            Ok((g, fd))
        })
        .collect();
    let rows = collect(rows)?;
    let mut t = Tracker::new();
    for (x, (g, fd)) in xs.iter().zip(&rows) {
        t.observe(-norm2(&sub(g, fd)), &[x]);
    }
    for (i, j) in sample_pairs(&xs, opts.seed) {
        let dx = norm2(&sub(&xs[i], &xs[j]));
        if dx > 0.0 {
            t.sup(norm2(&sub(&rows[i].1, &rows[j].1)) / dx);
        }
    }
    Ok(t.finish("gauge-gradient", statement, opts.tolerances.finite_difference))
}

/// Options for [`verify_signed_distance_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceOptions {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    /// Radius defining `U_eps` and the Lipschitz bound; defaults to the body's.
    pub radius: Option<f64>,
}

pub fn verify_signed_distance(body: &BodyC11, epsilon: f64, samples: usize, seed: u64) -> Result<VerificationReport> {
    verify_signed_distance_with(
        body,
        &SignedDistanceOptions {
            epsilon,
            samples,
            seed,
            radius: None,
        },
    )
}

/// Projection identity, projection monotonicity, differentiability with
/// Lipschitz gradient on `U_eps`, and convexity of `b_V`.
pub fn verify_signed_distance_with(body: &BodyC11, opts: &SignedDistanceOptions) -> Result<VerificationReport> {
    let (epsilon, samples, seed) = (opts.epsilon, opts.samples, opts.seed);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Input(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if samples < 2 {
        return Err(Error::Input("verification needs at least 2 samples".into()));
    }
    let tol = Tolerances::default();
    let r = opts.radius.unwrap_or(body.radius);
    if !(r > 0.0) {
        return Err(Error::Input("radius must be positive".into()));
    }
    let n = body.dimension();
    let floor = -(1.0 - epsilon) * r;
    let cast = body.sample_boundary(samples, seed)?;
    let mut rng = stream_rng(seed, 0x0e95);
    let heights: Vec<f64> = (0..samples).map(|_| rng.random_range(floor..r)).collect();
    let kicks: Vec<Vec<f64>> = (0..samples)
        .map(|_| scale(&unit_vector(&mut rng, n), 1e-3 * r * rng.random::<f64>()))
        .collect();
    let xs: Vec<Vec<f64>> = collect(
        cast.par_iter()
            .zip(&heights)
            .map(|(s, &t)| Ok(axpy(s, t, &body.boundary_normal(s)?)))
            .collect(),
    )?;

    struct Row {
        b: f64,
        p: Vec<f64>,
        grad: Vec<f64>,
        fd: Vec<f64>,
    }
    let h = 1e-6 * (1.0 + r);
    let eval = |x: &[f64]| -> Result<Row> {
        let b = body.signed_distance(x)?;
        let p = body.project_boundary(x)?;
        let grad = body.signed_distance_gradient(x)?;
        let mut fd = vec![0.0; n];
        for k in 0..n {
            let mut a = x.to_vec();
            let mut c = x.to_vec();
            a[k] += h;
            c[k] -= h;
            fd[k] = (body.signed_distance(&a)? - body.signed_distance(&c)?) / (2.0 * h);
        }
        Ok(Row { b, p, grad, fd })
    };
    let rows: Vec<Row> = collect(xs.par_iter().map(|x| eval(x)).collect())?;

    let mut ident = Tracker::new();
    let mut fd = Tracker::new();
    for (x, row) in xs.iter().zip(&rows) {
        let np = body.boundary_normal(&row.p)?;
        let resid = norm2(&sub(&sub(x, &row.p), &scale(&np, row.b)));
        ident.observe(-resid, &[x]);
        fd.observe(-norm2(&sub(&row.grad, &row.fd)), &[x]);
    }

    let mut mono = Tracker::new();
    let mut lip = Tracker::new();
    let bound = 1.0 / (epsilon * r);
    let pairs = sample_pairs(&xs, seed);
    for &(i, j) in &pairs {
        let dp = sub(&rows[i].p, &rows[j].p);
        let dx = sub(&xs[i], &xs[j]);
        mono.observe(dot(&dp, &dx) - epsilon * dot(&dp, &dp), &[&xs[i], &xs[j]]);
        let d = norm2(&dx);
        if d > 0.0 {
            let ratio = norm2(&sub(&rows[i].grad, &rows[j].grad)) / d;
            lip.sup(ratio);
            lip.observe(bound - ratio, &[&xs[i], &xs[j]]);
        }
    }
    // Close pairs from small perturbations that stay in U_eps.
    let near: Vec<Result<Option<(usize, Vec<f64>, Vec<f64>)>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let y = axpy(&xs[i], 1.0, &kicks[i]);
            if body.signed_distance(&y)? < floor {
                return Ok(None);
            }
            Ok(Some((i, y.clone(), body.signed_distance_gradient(&y)?)))
        })
        .collect();
    for item in near {
        if let Some((i, y, gy)) = item? {
            let d = norm2(&sub(&xs[i], &y));
            if d > 0.0 {
                let ratio = norm2(&sub(&rows[i].grad, &gy)) / d;
                lip.sup(ratio);
                lip.observe(bound - ratio, &[&xs[i], &y]);
            }
        }
    }

    // Midpoint convexity on random segments around the body.
    let (lo, hi) = body.centers.bounding_box();
    let lo: Vec<f64> = lo.iter().map(|v| v - 2.0 * r).collect();
    let hi: Vec<f64> = hi.iter().map(|v| v + 2.0 * r).collect();
    let segments = samples.max(1);
    let mut rng = stream_rng(seed, 0xc0e7);
    let segs: Vec<(Vec<f64>, Vec<f64>)> = (0..segments)
        .map(|_| (point_in_box(&mut rng, &lo, &hi), point_in_box(&mut rng, &lo, &hi)))
        .collect();
    let margins: Vec<Result<f64>> = segs
        .par_iter()
        .map(|(a, b)| {
            let m: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
            Ok(0.5 * (body.signed_distance(a)? + body.signed_distance(b)?) - body.signed_distance(&m)?)
        })
        .collect();
    let mut conv = Tracker::new();
    for ((a, b), m) in segs.iter().zip(margins) {
        conv.observe(m?, &[a, b]);
    }

    let records = vec![
        ident.finish(
            "projection-identity",
            "x - P_S(x) = b_V(x) N_S(P_S(x)) on U_eps",
            1e-7,
        ),
        mono.finish(
            "projection-monotonicity",
            "<P_S(x) - P_S(y), x - y> >= eps |P_S(x) - P_S(y)|^2 on U_eps",
            tol.identity,
        ),
        fd.finish(
            "signed-distance-gradient",
            "central differences of b_V match N_S(P_S(x)) on U_eps",
            tol.finite_difference,
        ),
        lip.finish(
            "signed-distance-gradient-lipschitz",
            "|grad b_V(x) - grad b_V(y)| <= |x - y| / (eps r) on U_eps",
            tol.lipschitz,
        ),
        conv.finish(
            "signed-distance-convexity",
            "b_V((x + y)/2) <= (b_V(x) + b_V(y))/2 on random segments",
            1e-10,
        ),
    ];
    Ok(VerificationReport::new("signed-distance", seed, samples, tol, records))
}

/// Options for [`verify_c1omega_with`].
#[derive(Clone, Debug)]
pub struct C1OmegaOptions {
    pub samples: usize,
    pub seed: u64,
    /// Modulus used when fitting constants; defaults to the body's.
    pub modulus: Option<Modulus>,
    /// Constant `M` for `W_x` and the dual inequality; defaults to the
    /// fitted Gauss-map constant.
    pub gauss_constant: Option<f64>,
    /// Boundary points at which `W_x` is probed, and probes per point.
    pub inclusion_points: usize,
    pub inclusion_probes: usize,
    pub tolerances: Tolerances,
}

impl C1OmegaOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        C1OmegaOptions {
            samples,
            seed,
            modulus: None,
            gauss_constant: None,
            inclusion_points: 64,
            inclusion_probes: 4,
            tolerances: Tolerances::default(),
        }
    }
}

pub fn verify_c1omega(body: &BodyC1Omega, samples: usize, seed: u64) -> Result<VerificationReport> {
    verify_c1omega_with(body, &C1OmegaOptions::new(samples, seed))
}

/// Largest `rho` with `rho * c >= m phi(2 rho)`.
fn w_radius(modulus: &Modulus, m: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while hi * c >= m * modulus.phi_raw(2.0 * hi) && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * c >= m * modulus.phi_raw(2.0 * mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Interpolation, minimum identity, fitted Gauss-map modulus, `W_x`
/// inclusion, the dual normal inequality, gradient pinching on the level
/// set and convexity of `F`.
pub fn verify_c1omega_with(body: &BodyC1Omega, opts: &C1OmegaOptions) -> Result<VerificationReport> {
    if opts.samples < 2 {
        return Err(Error::Input("verification needs at least 2 samples".into()));
    }
    let tol = &opts.tolerances;
    let space: &NormSpace = body.space();
    let hilbert = matches!(body.variant(), Variant::HilbertOmega);
    let fit_modulus = opts.modulus.clone().unwrap_or_else(|| body.modulus().clone());
    let mut records = Vec::new();

    // Interpolation.
    let data = &body.source().data;
    let evals = collect(data.par_iter().map(|d| body.evaluate(&d.point)).collect())?;
    let mut iv = Tracker::new();
    let mut ig = Tracker::new();
    for (d, e) in data.iter().zip(&evals) {
        iv.observe(-(e.value - 1.0).abs(), &[&d.point]);
        ig.observe(-norm2(&sub(&e.gradient, &d.normal)), &[&d.point]);
    }
    records.push(iv.finish("interpolation-value", "F(y) = 1 at every datum", tol.finite_difference));
    records.push(ig.finish(
        "interpolation-gradient",
        "grad F(y) equals the prescribed normal functional at every datum",
        1e-4,
    ));

    // Minimum on the inner points.
    let zs = &body.minimizers().vertices;
    let zev = collect(zs.par_iter().map(|z| body.evaluate(z)).collect())?;
    let mut mn = Tracker::new();
    for (z, e) in zs.iter().zip(&zev) {
        mn.observe(-(e.value - body.minimum_value()).abs(), &[z]);
        mn.observe(-norm2(&e.gradient) * 1e-1, &[z]);
    }
    records.push(mn.finish(
        "minimum",
        "F(z_y) = inf F and grad F(z_y) = 0 at every inner point",
        tol.finite_difference,
    ));

    // Boundary samples: the data first, then ray casts.
    let cast = body.sample_boundary(opts.samples, opts.seed)?;
    let cast_ev = collect(cast.par_iter().map(|s| body.evaluate(s)).collect())?;
    let mut pts: Vec<Vec<f64>> = body.source().points();
    pts.extend(cast.iter().cloned());
    let mut grads: Vec<Vec<f64>> = evals.iter().map(|e| e.gradient.clone()).collect();
    grads.extend(cast_ev.iter().map(|e| e.gradient.clone()));
    let normals: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| {
            if hilbert {
                scale(g, 1.0 / norm2(g))
            } else {
                scale(g, 1.0 / space.dual_norm(g))
            }
        })
        .collect();
    let pairs = sample_pairs(&pts, opts.seed);

    // Gradient pinching on the level set.
    let lower = body.gradient_lower_bound();
    let mut pinch_lo = Tracker::new();
    let mut max_grad: f64 = 0.0;
    let mut min_grad = f64::INFINITY;
    for (x, g) in pts.iter().zip(&grads) {
        let gn = space.dual_norm(g);
        max_grad = max_grad.max(gn);
        min_grad = min_grad.min(gn);
        pinch_lo.observe(gn - lower, &[x]);
    }
    let mut rec = pinch_lo.finish(
        "gradient-lower-bound",
        "|grad F| >= (1 - inf F) / (level radius + inner offset) on {F = 1}",
        0.0,
    );
    rec.measured_constant = Some(min_grad);
    records.push(rec);

    // Gradient modulus, including pairs with the nearest point of conv{z_y}.
    let mut gm = Tracker::new();
    for &(i, j) in &pairs {
        let dx = space.norm(&sub(&pts[i], &pts[j]));
        if dx > 0.0 {
            gm.sup(space.dual_norm(&sub(&grads[i], &grads[j])) / fit_modulus.omega_raw(dx));
        }
    }
    let zproj = collect(
        pts.par_iter()
            .map(|x| Ok(space.project(x, body.minimizers())?.distance))
            .collect(),
    )?;
    for (g, dz) in grads.iter().zip(&zproj) {
        if *dz > 0.0 {
            gm.sup(space.dual_norm(g) / fit_modulus.omega_raw(*dz));
        }
    }
    let fitted_l = gm.constant.unwrap_or(0.0);
    let upper = fitted_l * fit_modulus.omega_raw(body.level_radius() + body.inner_offset());
    gm.observe(if fitted_l.is_finite() { 1.0 } else { -1.0 }, &[]);
    records.push(gm.finish(
        "gradient-modulus",
        "|grad F(s) - grad F(t)| <= L omega(|s - t|) with finite fitted L",
        0.0,
    ));
    let mut pinch_hi = Tracker::new();
    for (x, g) in pts.iter().zip(&grads) {
        pinch_hi.observe(upper * (1.0 + 1e-12) - space.dual_norm(g), &[x]);
    }
    let mut rec = pinch_hi.finish(
        "gradient-upper-bound",
        "|grad F| <= L omega(level radius + inner offset) on {F = 1} with the fitted L",
        0.0,
    );
    rec.measured_constant = Some(max_grad);
    records.push(rec);
    let mut pinch = Tracker::new();
    pinch.sup(max_grad.max(1.0 / min_grad));
    pinch.observe(if min_grad > 0.0 { 1.0 } else { -1.0 }, &[]);
    records.push(pinch.finish(
        "pinching",
        "M^-1 <= |grad F| <= M on {F = 1}; the constant is the smallest such M",
        0.0,
    ));

    if hilbert {
        // Gauss-map modulus.
        let mut gmod = Tracker::new();
        for &(i, j) in &pairs {
            let dx = norm2(&sub(&pts[i], &pts[j]));
            if dx > 0.0 {
                gmod.sup(norm2(&sub(&normals[i], &normals[j])) / fit_modulus.omega_raw(dx));
            }
        }
        let fitted = gmod.constant.unwrap_or(0.0).max(1e-12);
        gmod.observe(if fitted.is_finite() { 1.0 } else { -1.0 }, &[]);
        let m = opts.gauss_constant.unwrap_or(fitted);
        records.push(gmod.finish(
            "gauss-map-modulus",
            "|N_S(s) - N_S(t)| <= M omega(|s - t|) with finite fitted M",
            0.0,
        ));

        // W_x meets the samples only at x.
        let wrows: Vec<(f64, usize, usize)> = (0..pts.len())
            .into_par_iter()
            .map(|i| {
                let mut best = (f64::INFINITY, i, i);
                for j in 0..pts.len() {
                    let d = norm2(&sub(&pts[i], &pts[j]));
                    if d > 1e-12 {
                        let margin = m * fit_modulus.phi_raw(2.0 * d) - dot(&normals[i], &sub(&pts[i], &pts[j]));
                        if margin < best.0 {
                            best = (margin, i, j);
                        }
                    }
                }
                best
            })
            .collect();
        let mut wx = Tracker::new();
        for (margin, i, j) in wrows {
            if margin.is_finite() {
                wx.observe(margin, &[&pts[i], &pts[j]]);
            }
        }
        // W_x lies in V.
        let step = (pts.len() / opts.inclusion_points.max(1)).max(1);
        let probes: Vec<(usize, Vec<f64>)> = {
            let mut out = Vec::new();
            for i in (0..pts.len()).step_by(step) {
                let mut rng = stream_rng(opts.seed, 0x3ac5u64 << 32 | i as u64);
                for _ in 0..opts.inclusion_probes {
                    let mut u = unit_vector(&mut rng, pts[i].len());
                    let mut c = dot(&normals[i], &u);
                    if c < 0.0 {
                        u = scale(&u, -1.0);
                        c = -c;
                    }
                    let rho = w_radius(&fit_modulus, m, c) * rng.random_range(0.5..=1.0);
                    out.push((i, axpy(&pts[i], -rho, &u)));
                }
            }
            out
        };
        let inc: Vec<f64> = probes
            .par_iter()
            .map(|(_, p)| match body.eval_f(p) {
                Ok(v) => 1.0 - v,
                Err(_) => f64::NEG_INFINITY,
            })
            .collect();
        for ((i, p), margin) in probes.iter().zip(inc) {
            wx.observe(margin, &[&pts[*i], p]);
        }
        let mut rec = wx.finish(
            "w-inclusion",
            "with M the fitted Gauss-map constant unless overridden, W_x = {p : <N(x), x - p> >= M phi(2|x - p|)} lies in {F <= 1} and meets the samples only at x",
            1e-8,
        );
        rec.measured_constant = Some(m);
        records.push(rec);

        // The dual normal inequality with the same M.
        let mut dual = Tracker::new();
        for &(i, j) in &pairs {
            let r = norm2(&sub(&normals[i], &normals[j]));
            for (a, b) in [(i, j), (j, i)] {
                let lhs = dot(&normals[a], &sub(&pts[a], &pts[b]));
                let rhs = 0.5 * r * fit_modulus.omega_inv_raw(r / (4.0 * m));
                dual.observe(lhs - rhs, &[&pts[a], &pts[b]]);
            }
        }
        let mut rec = dual.finish(
            "dual-inequality",
            "<N(t), t - s> >= (|N(s) - N(t)|/2) omega^-1(|N(s) - N(t)| / 4M) on sampled pairs, M as above",
            tol.identity,
        );
        rec.measured_constant = Some(m);
        records.push(rec);
    }

    // Midpoint convexity of F in the validated region.
    let (lo, hi) = body.validated_region();
    let mut rng = stream_rng(opts.seed, 0xc0e7);
    let segs: Vec<(Vec<f64>, Vec<f64>)> = (0..opts.samples)
        .map(|_| (point_in_box(&mut rng, lo, hi), point_in_box(&mut rng, lo, hi)))
        .collect();
    let margins: Vec<Result<f64>> = segs
        .par_iter()
        .map(|(a, b)| {
            let mid: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
            Ok(0.5 * (body.eval_f(a)? + body.eval_f(b)?) - body.eval_f(&mid)?)
        })
        .collect();
    let mut conv = Tracker::new();
    for ((a, b), m) in segs.iter().zip(margins) {
        conv.observe(m?, &[a, b]);
    }
    records.push(conv.finish(
        "convexity",
        "F((x + y)/2) <= (F(x) + F(y))/2 on random segments of the validated region",
        1e-9,
    ));

    Ok(VerificationReport::new("c1omega", opts.seed, opts.samples, tol.clone(), records))
}
