//! Vector arithmetic, norms and nearest points of polytopes.
//!
//! Every body built by this crate reduces its distance queries to the
//! distance from a point to the convex hull of finitely many generators.
//! Under the Euclidean norm that is an exact min-norm-point problem solved
//! with Wolfe's corral iteration; under an `l^p` norm only the distance is
//! needed and a projected first-order method over the convex weights is
//! used instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn lp_norm(a: &[f64], p: f64) -> f64 {
    let m = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    // Scaled to avoid overflow for large exponents.
    m * a.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Norm of the ambient space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NormKind {
    Euclidean,
    Lp { p: f64 },
}

/// A finite-dimensional normed space `(R^n, ||.||)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpace {
    pub kind: NormKind,
    pub dimension: usize,
}

/// A linear functional on the ambient space, stored by its coefficients in
/// the standard pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualFunctional(pub Vec<f64>);

impl DualFunctional {
    pub fn apply(&self, v: &[f64]) -> f64 {
        dot(&self.0, v)
    }
}

/// Convex hull of a nonempty list of generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polytope {
    pub vertices: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::Input("polytope needs at least one vertex".into()))?;
        let n = first.len();
        if n == 0 {
            return Err(Error::Input("vertices must have dimension >= 1".into()));
        }
        if let Some(i) = vertices.iter().position(|v| v.len() != n) {
            return Err(Error::Input(format!(
                "vertex {i} has dimension {} instead of {n}",
                vertices[i].len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Input(format!("vertex {i} has a non-finite coordinate")));
        }
        Ok(Polytope { vertices })
    }

    pub fn dimension(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.dimension();
        let mut c = vec![0.0; n];
        for v in &self.vertices {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
        let k = self.vertices.len() as f64;
        c.iter_mut().for_each(|ci| *ci /= k);
        c
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dimension();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for v in &self.vertices {
            for k in 0..n {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Point `sum_i w_i v_i` for weights aligned with the vertex list.
    pub fn combination(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        for (v, &w) in self.vertices.iter().zip(weights) {
            if w != 0.0 {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += w * vi;
                }
            }
        }
        out
    }
}

/// Nearest point of a polytope together with the distance and the convex
/// weights that realize it.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub distance: f64,
    pub weights: Vec<f64>,
}

const WOLFE_TOLERANCE: f64 = 1e-12;
const LP_TOLERANCE: f64 = 1e-9;

impl NormSpace {
    pub fn euclidean(dimension: usize) -> Self {
        NormSpace {
            kind: NormKind::Euclidean,
            dimension,
        }
    }

    pub fn lp(dimension: usize, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Input(format!("l^p exponent must satisfy 1 < p < inf, got {p}")));
        }
        Ok(NormSpace {
            kind: NormKind::Lp { p },
            dimension,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Input("dimension must be >= 1".into()));
        }
        if let NormKind::Lp { p } = self.kind {
            NormSpace::lp(self.dimension, p)?;
        }
        Ok(())
    }

    pub fn is_euclidean(&self) -> bool {
        match self.kind {
            NormKind::Euclidean => true,
            NormKind::Lp { p } => p == 2.0,
        }
    }

    /// Exponent `p` of the norm (2 for the Euclidean norm).
    pub fn exponent(&self) -> f64 {
        match self.kind {
            NormKind::Euclidean => 2.0,
            NormKind::Lp { p } => p,
        }
    }

    /// Conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn dual_exponent(&self) -> f64 {
        let p = self.exponent();
        p / (p - 1.0)
    }

    /// The space `(R^n, ||.||_*)` whose points are functionals of this one.
    pub fn dual(&self) -> NormSpace {
        match self.kind {
            NormKind::Euclidean => *self,
            NormKind::Lp { .. } => NormSpace {
                kind: NormKind::Lp {
                    p: self.dual_exponent(),
                },
                dimension: self.dimension,
            },
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match self.kind {
            NormKind::Euclidean => norm2(v),
            NormKind::Lp { p } => lp_norm(v, p),
        }
    }

    pub fn dual_norm(&self, xi: &[f64]) -> f64 {
        match self.kind {
            NormKind::Euclidean => norm2(xi),
            NormKind::Lp { .. } => lp_norm(xi, self.dual_exponent()),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.norm(&sub(a, b))
    }

    /// Norming functional of `u`: the unique `xi` with `||xi||_* = 1` and
    /// `xi(u) = ||u||`. It is also the gradient of the norm at `u`.
    pub fn duality_map(&self, u: &[f64]) -> Result<DualFunctional> {
        let nu = self.norm(u);
        if !(nu > 0.0) {
            return Err(Error::Domain("duality map is undefined at the origin".into()));
        }
        Ok(DualFunctional(match self.kind {
            NormKind::Euclidean => scale(u, 1.0 / nu),
            NormKind::Lp { p } => u
                .iter()
                .map(|&ui| ui.signum() * (ui.abs() / nu).powf(p - 1.0))
                .collect(),
        }))
    }

    /// Unit vector `N` normed by the unit functional `xi`, i.e. `xi(N) = 1`
    /// and `||N|| = 1`.
    pub fn normed_vector(&self, xi: &DualFunctional) -> Result<Vec<f64>> {
        Ok(self.dual().duality_map(&xi.0)?.0)
    }

    /// Nearest point of `polytope` to `x`. The nearest point is exact under
    /// the Euclidean norm and approximate (distance to `1e-9`) under `l^p`.
    pub fn project(&self, x: &[f64], polytope: &Polytope) -> Result<Projection> {
        if polytope.is_empty() {
            return Err(Error::Input("empty polytope".into()));
        }
        if polytope.dimension() != x.len() {
            return Err(Error::Input(format!(
                "point dimension {} differs from polytope dimension {}",
                x.len(),
                polytope.dimension()
            )));
        }
        if self.is_euclidean() {
            euclidean_projection(x, polytope)
        } else {
            lp_projection(x, polytope, self.exponent())
        }
    }

    pub fn distance_to_polytope(&self, x: &[f64], polytope: &Polytope) -> Result<f64> {
        Ok(self.project(x, polytope)?.distance)
    }
}

/// Nearest point of `polytope` to `x` under the norm of `space`.
pub fn project_polytope(x: &[f64], polytope: &Polytope, space: &NormSpace) -> Result<Projection> {
    space.project(x, polytope)
}

fn euclidean_projection(x: &[f64], polytope: &Polytope) -> Result<Projection> {
    let shifted: Vec<Vec<f64>> = polytope.vertices.iter().map(|v| sub(v, x)).collect();
    let (weights, _) = min_norm_point(&shifted)?;
    let offset = polytope.combination(&weights);
    let diff = sub(&offset, x);
    Ok(Projection {
        distance: norm2(&diff),
        point: offset,
        weights,
    })
}

/// Convex weights of the min-norm point of `conv(points)` computed with
/// Wolfe's algorithm. Returns the weights and the final duality gap.
pub fn min_norm_point(points: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let m = points.len();
    let n = points[0].len();
    let sq: Vec<f64> = points.iter().map(|p| dot(p, p)).collect();
    let scale = sq.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    let start = argmin(&sq);
    let mut corral = vec![start];
    let mut w = vec![1.0];
    let mut current = points[start].clone();
    let cap = 10 * n.max(1) * m.max(1) + 10;
    let mut steps = 0usize;
    let mut gap;

    loop {
        let xx = dot(&current, &current);
        let (j, best) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dot(&current, p)))
            .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        gap = xx - best;
        if gap <= WOLFE_TOLERANCE * scale || xx <= 1e-30 * scale {
            break;
        }
        if corral.contains(&j) {
            // Stalled by rounding: the corral is already optimal up to roundoff.
            if gap <= 1e-9 * scale {
                break;
            }
            return Err(Error::Numerical {
                message: "min-norm point iteration stalled".into(),
                residual: gap,
            });
        }
        corral.push(j);
        w.push(0.0);

        loop {
            steps += 1;
            if steps > cap {
                return Err(Error::Numerical {
                    message: format!("min-norm point did not converge in {cap} iterations"),
                    residual: gap,
                });
            }
            let alpha = affine_minimizer(points, &corral);
            if alpha.iter().all(|&a| a > 1e-15) {
                w = alpha;
                break;
            }
            let mut theta = f64::INFINITY;
            let mut drop = 0;
            for (k, (&wk, &ak)) in w.iter().zip(&alpha).enumerate() {
                if ak <= 1e-15 {
                    let t = wk / (wk - ak);
                    if t < theta {
                        theta = t;
                        drop = k;
                    }
                }
            }
            let theta = theta.clamp(0.0, 1.0);
            for (wk, ak) in w.iter_mut().zip(&alpha) {
                *wk = theta * ak + (1.0 - theta) * *wk;
            }
            w[drop] = 0.0;
            let mut k = 0;
            while k < corral.len() {
                if w[k] <= 1e-15 {
                    corral.remove(k);
                    w.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
        }

        current = vec![0.0; n];
        for (&i, &wi) in corral.iter().zip(&w) {
            for (c, p) in current.iter_mut().zip(&points[i]) {
                *c += wi * p;
            }
        }
    }

    let mut weights = vec![0.0; m];
    for (&i, &wi) in corral.iter().zip(&w) {
        weights[i] = wi;
    }
    Ok((weights, gap))
}

/// Minimizer of `||sum a_i p_i||` over the affine hull of the corral,
/// returned as affine weights.
fn affine_minimizer(points: &[Vec<f64>], corral: &[usize]) -> Vec<f64> {
    let k = corral.len();
    if k == 1 {
        return vec![1.0];
    }
    let mut mat = DMatrix::<f64>::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in a..k {
            let g = dot(&points[corral[a]], &points[corral[b]]);
            mat[(a, b)] = g;
            mat[(b, a)] = g;
        }
        mat[(a, k)] = 1.0;
        mat[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = mat
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .or_else(|| mat.svd(true, true).solve(&rhs, 1e-14).ok());
    match sol {
        Some(s) => {
            let a: Vec<f64> = s.iter().take(k).cloned().collect();
            let total: f64 = a.iter().sum();
            a.iter().map(|v| v / total).collect()
        }
        None => {
            let mut a = vec![0.0; k];
            a[0] = 1.0;
            a
        }
    }
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc })
        .0
}

/// Euclidean projection of `v` onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let t = (cumulative - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Gradient of `1/2 ||r||_p^2` with respect to `r`.
fn half_sq_lp_gradient(r: &[f64], p: f64, norm: f64) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; r.len()];
    }
    r.iter()
        .map(|&ri| ri.signum() * ri.abs().powf(p - 1.0) * norm.powf(2.0 - p))
        .collect()
}

fn lp_projection(x: &[f64], polytope: &Polytope, p: f64) -> Result<Projection> {
    let m = polytope.len();
    let verts = &polytope.vertices;
    // Warm start from the Euclidean nearest point.
    let mut lambda = euclidean_projection(x, polytope)?.weights;
    let residual_of = |lam: &[f64]| sub(x, &polytope.combination(lam));
    let objective = |lam: &[f64]| {
        let d = lp_norm(&residual_of(lam), p);
        0.5 * d * d
    };
    let grad_of = |lam: &[f64]| -> (Vec<f64>, f64) {
        let r = residual_of(lam);
        let d = lp_norm(&r, p);
        let g = half_sq_lp_gradient(&r, p, d);
        (verts.iter().map(|v| -dot(v, &g)).collect(), d)
    };

    let max_iter = 200_000;
    let mut step: f64 = {
        let s = verts.iter().map(|v| dot(v, v)).fold(0.0, f64::max);
        1.0 / (m as f64 * s).max(1e-12)
    };
    let mut y = lambda.clone();
    let mut t_mom = 1.0f64;
    let mut value = objective(&lambda);
    let mut last_gap = f64::INFINITY;
    for _ in 0..max_iter {
        let (g_lam, d_lam) = grad_of(&lambda);
        let gap = dot(&g_lam, &lambda) - g_lam.iter().cloned().fold(f64::INFINITY, f64::min);
        last_gap = gap;
        if d_lam <= 1e-12 || gap <= LP_TOLERANCE * 1e-2 * d_lam * (1.0 + d_lam) {
            let point = polytope.combination(&lambda);
            return Ok(Projection {
                distance: d_lam,
                point,
                weights: lambda,
            });
        }
        let (g_y, _) = grad_of(&y);
        let f_y = objective(&y);
        let mut next;
        loop {
            let trial: Vec<f64> = y.iter().zip(&g_y).map(|(a, b)| a - step * b).collect();
            next = project_simplex(&trial);
            let diff = sub(&next, &y);
            let model = f_y + dot(&g_y, &diff) + dot(&diff, &diff) / (2.0 * step);
            if objective(&next) <= model + 1e-18 || step < 1e-300 {
                break;
            }
            step *= 0.5;
        }
        let next_value = objective(&next);
        if next_value > value {
            // Restart momentum when the objective increases.
            t_mom = 1.0;
            y = lambda.clone();
            step *= 1.5;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
        let beta = (t_mom - 1.0) / t_next;
        y = next
            .iter()
            .zip(&lambda)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        y = project_simplex(&y);
        t_mom = t_next;
        lambda = next;
        value = next_value;
        step *= 1.1;
    }
    Err(Error::Numerical {
        message: "l^p distance to polytope did not converge".into(),
        residual: last_gap,
    })
}
