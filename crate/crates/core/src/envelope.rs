//! Convex envelopes of finite minima of convex pieces.
//!
//! The envelope `conv(g)` of `g = min_i g_i` is the biconjugate `g^**`.
//! Each piece carries a closed-form conjugate, so `g^* = max_i g_i^*` is
//! explicit and `conv(g)(x) = sup_xi <x, xi> - max_i g_i^*(xi)` is a smooth
//! concave maximization ([`direct_concave_max`]). The second backend samples
//! `g` on a lattice and applies the discrete Legendre transform twice
//! ([`GridEnvelope`]). The two agree up to lattice resolution.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, lp_norm, norm2};
use crate::modulus::Modulus;

/// A convex function with closed-form conjugate derivatives.
pub trait ConvexPiece: Send + Sync {
    fn dimension(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Returns `g^*(xi)` and fills its gradient and row-major Hessian.
    fn conjugate_derivatives(&self, xi: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64;

    fn conjugate(&self, xi: &[f64]) -> f64 {
        let n = self.dimension();
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        self.conjugate_derivatives(xi, &mut g, &mut h)
    }
}

/// Fills `hess` with the Hessian of `c(|v|)` for the Euclidean norm.
fn radial_hessian(v: &[f64], rho: f64, c1: f64, c2: f64, hess: &mut [f64]) {
    let n = v.len();
    if rho <= 1e-300 {
        for i in 0..n {
            for j in 0..n {
                hess[i * n + j] = if i == j { c2 } else { 0.0 };
            }
        }
        return;
    }
    let t = c1 / rho;
    for i in 0..n {
        for j in 0..n {
            let vv = v[i] * v[j] / (rho * rho);
            hess[i * n + j] = c2 * vv + t * ((i == j) as u8 as f64 - vv);
        }
    }
}

/// `g(x) = 1 + <N, x - y> + delta^-1 phi(|x - y|)` in a Euclidean space.
#[derive(Clone, Debug)]
pub struct TangencyPiece {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub delta: f64,
    pub modulus: Arc<Modulus>,
}

impl ConvexPiece for TangencyPiece {
    fn dimension(&self) -> usize {
        self.point.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut lin = 0.0;
        let mut sq = 0.0;
        for ((xi, yi), ni) in x.iter().zip(&self.point).zip(&self.normal) {
            let u = xi - yi;
            lin += ni * u;
            sq += u * u;
        }
        1.0 + lin + self.modulus.phi_raw(sq.sqrt()) / self.delta
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let u: Vec<f64> = x.iter().zip(&self.point).map(|(a, b)| a - b).collect();
        let rho = norm2(&u);
        let w = if rho > 0.0 {
            self.modulus.omega_raw(rho) / (self.delta * rho)
        } else {
            0.0
        };
        for k in 0..out.len() {
            out[k] = self.normal[k] + w * u[k];
        }
    }

    fn conjugate_derivatives(&self, xi: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let n = xi.len();
        let mut v = [0.0; 8];
        let v = &mut v[..n];
        let mut rho2 = 0.0;
        for k in 0..n {
            v[k] = xi[k] - self.normal[k];
            rho2 += v[k] * v[k];
        }
        let rho = rho2.sqrt();
        let d = self.delta;
        let value = dot(xi, &self.point) - 1.0 + self.modulus.phi_star_raw(d * rho) / d;
        let c1 = self.modulus.omega_inv_raw(d * rho);
        let c2 = d * self.modulus.omega_inv_derivative_raw(d * rho);
        for k in 0..n {
            grad[k] = self.point[k] + if rho > 0.0 { c1 * v[k] / rho } else { 0.0 };
        }
        radial_hessian(v, rho, c1, c2, hess);
        value
    }
}

/// `g(x) = 1 + D(x - y) + M/(1+alpha) |x - y|_p^{1+alpha}` on `l^p`.
#[derive(Clone, Debug)]
pub struct DualPiece {
    pub point: Vec<f64>,
    pub functional: Vec<f64>,
    pub p: f64,
    pub alpha: f64,
    pub m: f64,
}

impl DualPiece {
    fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Coefficient of `|xi - D|_q^{1+1/alpha}` in the conjugate.
    pub fn conjugate_coefficient(&self) -> f64 {
        self.alpha / ((1.0 + self.alpha) * self.m.powf(1.0 / self.alpha))
    }
}

impl ConvexPiece for DualPiece {
    fn dimension(&self) -> usize {
        self.point.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u: Vec<f64> = x.iter().zip(&self.point).map(|(a, b)| a - b).collect();
        1.0 + dot(&self.functional, &u) + self.m / (1.0 + self.alpha) * lp_norm(&u, self.p).powf(1.0 + self.alpha)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let u: Vec<f64> = x.iter().zip(&self.point).map(|(a, b)| a - b).collect();
        let nu = lp_norm(&u, self.p);
        for k in 0..out.len() {
            out[k] = self.functional[k];
            if nu > 0.0 {
                let j = u[k].abs().powf(self.p - 1.0).copysign(u[k]) / nu.powf(self.p - 1.0);
                out[k] += self.m * nu.powf(self.alpha) * j;
            }
        }
    }

    fn conjugate_derivatives(&self, xi: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let n = xi.len();
        let q = self.q();
        let beta = 1.0 + 1.0 / self.alpha;
        let c = self.conjugate_coefficient();
        let v: Vec<f64> = xi.iter().zip(&self.functional).map(|(a, b)| a - b).collect();
        let nv = lp_norm(&v, q);
        let value = dot(xi, &self.point) - 1.0 + c * nv.powf(beta);
        for h in hess.iter_mut() {
            *h = 0.0;
        }
        if nv <= 1e-300 {
            grad.copy_from_slice(&self.point);
            return value;
        }
        let s: Vec<f64> = v.iter().map(|&t| t.abs().powf(q - 1.0).copysign(t)).collect();
        let a = c * beta * nv.powf(beta - q);
        for k in 0..n {
            grad[k] = self.point[k] + a * s[k];
        }
        let b = c * beta * (beta - q) * nv.powf(beta - 2.0 * q);
        // |v_k|^{q-2} is singular at v_k = 0 when q < 2; the cap keeps Newton
        // steps finite without changing the objective.
        let floor = 1e-8 * nv;
        for i in 0..n {
            for j in 0..n {
                hess[i * n + j] = b * s[i] * s[j];
            }
            let vi = v[i].abs().max(floor);
            hess[i * n + i] += a * (q - 1.0) * vi.powf(q - 2.0);
        }
        value
    }
}

/// `g(x) = k/2 |x - c|^2 + <l, x> + e`.
#[derive(Clone, Debug)]
pub struct QuadraticPiece {
    pub center: Vec<f64>,
    pub curvature: f64,
    pub linear: Vec<f64>,
    pub offset: f64,
}

impl ConvexPiece for QuadraticPiece {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut sq = 0.0;
        for (a, b) in x.iter().zip(&self.center) {
            sq += (a - b) * (a - b);
        }
        0.5 * self.curvature * sq + dot(&self.linear, x) + self.offset
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..out.len() {
            out[k] = self.curvature * (x[k] - self.center[k]) + self.linear[k];
        }
    }

    fn conjugate_derivatives(&self, xi: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let n = xi.len();
        let v: Vec<f64> = xi.iter().zip(&self.linear).map(|(a, b)| a - b).collect();
        for k in 0..n {
            grad[k] = self.center[k] + v[k] / self.curvature;
            for j in 0..n {
                hess[k * n + j] = if k == j { 1.0 / self.curvature } else { 0.0 };
            }
        }
        dot(&v, &self.center) + dot(&v, &v) / (2.0 * self.curvature) - self.offset
    }
}

/// `g = min_i g_i` over a finite list of pieces.
pub struct PieceFamily {
    pieces: Vec<Box<dyn ConvexPiece>>,
    dimension: usize,
}

impl std::fmt::Debug for PieceFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PieceFamily")
            .field("pieces", &self.pieces.len())
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl PieceFamily {
    pub fn new(pieces: Vec<Box<dyn ConvexPiece>>) -> Result<Self> {
        let dimension = pieces
            .first()
            .ok_or_else(|| Error::Input("a piece family needs at least one piece".into()))?
            .dimension();
        if dimension == 0 || dimension > 8 {
            return Err(Error::Input(format!("dimension {dimension} is outside 1..=8")));
        }
        if pieces.iter().any(|p| p.dimension() != dimension) {
            return Err(Error::Input("pieces have mixed dimensions".into()));
        }
        Ok(PieceFamily { pieces, dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece(&self, i: usize) -> &dyn ConvexPiece {
        self.pieces[i].as_ref()
    }

    /// Piece values at `x`.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.pieces.iter().map(|p| p.value(x)).collect()
    }

    /// `g(x)` and the index of a minimizing piece.
    pub fn min_value(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.pieces.iter().enumerate() {
            let v = p.value(x);
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    /// `g^*(xi) = max_i g_i^*(xi)`.
    pub fn conjugate(&self, xi: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.conjugate(xi))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Envelope evaluation strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvelopeBackend {
    /// Double discrete Legendre transform on a lattice with `resolution`
    /// points per axis.
    GridBiconjugate { resolution: usize },
    /// Interior-point maximization of `<x, xi> - g^*(xi)`.
    DirectConcaveMax { tolerance: f64, max_iterations: usize },
}

impl Default for EnvelopeBackend {
    fn default() -> Self {
        EnvelopeBackend::direct()
    }
}

impl EnvelopeBackend {
    pub fn direct() -> Self {
        EnvelopeBackend::DirectConcaveMax {
            tolerance: 1e-12,
            max_iterations: 10_000,
        }
    }

    /// Lattice with the default resolution for dimension `n`.
    pub fn grid(n: usize) -> Self {
        EnvelopeBackend::GridBiconjugate {
            resolution: default_grid_resolution(n),
        }
    }
}

pub fn default_grid_resolution(n: usize) -> usize {
    match n {
        1 => 4097,
        2 => 513,
        _ => 129,
    }
}

/// Result of the direct solver.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectSolution {
    pub value: f64,
    /// Maximizer `xi`, which is the gradient of the envelope when it exists.
    pub gradient: Vec<f64>,
    /// Upper minus lower bound on the envelope value.
    pub gap: f64,
    pub newton_steps: usize,
}

struct Workspace {
    vals: Vec<f64>,
    grads: Vec<f64>,
    hesses: Vec<f64>,
}

impl Workspace {
    fn new(m: usize, n: usize) -> Self {
        Workspace {
            vals: vec![0.0; m],
            grads: vec![0.0; m * n],
            hesses: vec![0.0; m * n * n],
        }
    }

    fn eval(&mut self, family: &PieceFamily, xi: &[f64]) {
        let n = family.dimension;
        for (i, p) in family.pieces.iter().enumerate() {
            self.vals[i] = p.conjugate_derivatives(
                xi,
                &mut self.grads[i * n..(i + 1) * n],
                &mut self.hesses[i * n * n..(i + 1) * n * n],
            );
        }
    }

    fn max(&self) -> f64 {
        self.vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn conj_values(family: &PieceFamily, xi: &[f64]) -> Vec<f64> {
    family.pieces.iter().map(|p| p.conjugate(xi)).collect()
}

fn solve_spd(h: DMatrix<f64>, g: DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let tr = (0..n).map(|i| h[(i, i)].abs()).sum::<f64>().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut hh = h.clone();
        for i in 0..n {
            hh[(i, i)] += shift;
        }
        if let Some(ch) = hh.clone().cholesky() {
            return Some(ch.solve(&g));
        }
        shift = if shift == 0.0 { 1e-14 * tr } else { shift * 100.0 };
    }
    h.lu().solve(&g)
}

/// Maximizes `<x, xi> - max_i g_i^*(xi)` and returns the envelope value at `x`.
///
/// A minimizing piece whose gradient at `x` is also a maximizer of the dual
/// problem certifies `conv(g)(x) = g(x)`; that case returns immediately and
/// exactly. Otherwise a log-barrier method on the epigraph form runs to a
/// relative duality gap of `tolerance`, followed by a Newton polish of the
/// optimality system on the active pieces.
pub fn direct_concave_max(
    family: &PieceFamily,
    x: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<DirectSolution> {
    let n = family.dimension;
    let m = family.len();
    if x.len() != n {
        return Err(Error::Input(format!(
            "query has dimension {}, expected {n}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("query point must be finite".into()));
    }
    let gvals = family.values(x);
    let (gmin, imin) = gvals
        .iter()
        .enumerate()
        .fold((f64::INFINITY, 0), |b, (i, &v)| if v < b.0 { (v, i) } else { b });
    let scale = 1.0 + gmin.abs();
    let tie = 1e-12 * scale;

    let mut best_xi = vec![0.0; n];
    let mut best_lower = f64::NEG_INFINITY;
    let mut candidates: Vec<usize> = (0..m).filter(|&i| gvals[i] <= gmin + tie).collect();
    candidates.sort_by(|&a, &b| gvals[a].partial_cmp(&gvals[b]).unwrap());
    for &i in candidates.iter().take(8) {
        let mut xi = vec![0.0; n];
        family.pieces[i].gradient(x, &mut xi);
        let own = dot(&xi, x) - gvals[i];
        let top = conj_values(family, &xi).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let lower = dot(&xi, x) - top;
        if top <= own + 1e-13 * (1.0 + own.abs()) {
            return Ok(DirectSolution {
                value: gvals[i],
                gradient: xi,
                gap: (gvals[i] - lower).max(0.0),
                newton_steps: 0,
            });
        }
        if lower > best_lower {
            best_lower = lower;
            best_xi = xi;
        }
    }
    if candidates.is_empty() {
        family.pieces[imin].gradient(x, &mut best_xi);
        best_lower = dot(&best_xi, x) - family.conjugate(&best_xi);
    }

    let target = tolerance * scale;
    let mut ws = Workspace::new(m, n);
    let mut xi = best_xi.clone();
    ws.eval(family, &xi);
    let gap0 = (gmin - best_lower).max(target);
    let mut s = ws.max() + gap0.max(1e-6 * scale);
    let mut tau = m as f64 / gap0;
    let mut steps = 0usize;
    let dim = n + 1;

    'outer: loop {
        for _ in 0..200 {
            if steps >= max_iterations {
                break 'outer;
            }
            steps += 1;
            let mut grad = DVector::<f64>::zeros(dim);
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for k in 0..n {
                grad[k] = -tau * x[k];
            }
            grad[n] = tau;
            for i in 0..m {
                let r = s - ws.vals[i];
                let gi = &ws.grads[i * n..(i + 1) * n];
                let hi = &ws.hesses[i * n * n..(i + 1) * n * n];
                let inv = 1.0 / r;
                let inv2 = inv * inv;
                for a in 0..n {
                    grad[a] += gi[a] * inv;
                    for b in 0..n {
                        hess[(a, b)] += gi[a] * gi[b] * inv2 + hi[a * n + b] * inv;
                    }
                    hess[(a, n)] -= gi[a] * inv2;
                    hess[(n, a)] -= gi[a] * inv2;
                }
                grad[n] -= inv;
                hess[(n, n)] += inv2;
            }
            let Some(step) = solve_spd(hess, -grad.clone()) else {
                break;
            };
            let decrement = -grad.dot(&step);
            if !(decrement.is_finite()) || decrement < 1e-12 {
                break;
            }
            // Backtracking on the barrier, comparing differences rather than
            // totals to keep precision at large tau.
            let mut t = 1.0;
            let old_vals = ws.vals.clone();
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = (0..n).map(|k| xi[k] + t * step[k]).collect();
                let cs = s + t * step[n];
                ws.eval(family, &cand);
                let mut feasible = true;
                let mut diff = tau * (t * step[n] - t * (0..n).map(|k| x[k] * step[k]).sum::<f64>());
                for i in 0..m {
                    let r_new = cs - ws.vals[i];
                    let r_old = s - old_vals[i];
                    if r_new <= 0.0 {
                        feasible = false;
                        break;
                    }
                    diff -= ((r_new - r_old) / r_old).ln_1p();
                }
                if feasible && (diff <= -0.25 * t * decrement || (decrement < 0.1 && t == 1.0)) {
                    xi = cand;
                    s = cs;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                ws.vals = old_vals;
                ws.eval(family, &xi);
                break;
            }
            if decrement < 1e-10 {
                break;
            }
        }
        if m as f64 / tau <= target {
            break;
        }
        tau *= 16.0;
    }
    ws.eval(family, &xi);
    let mut lower = dot(&xi, x) - ws.max();
    if lower > best_lower {
        best_lower = lower;
        best_xi = xi.clone();
    }
    let mut gap = (m as f64 / tau).max(0.0);

    // Newton polish on the active set.
    let weights: Vec<f64> = (0..m).map(|i| 1.0 / (tau * (s - ws.vals[i]))).collect();
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let active: Vec<usize> = (0..m).filter(|&i| weights[i] >= 1e-6 * wmax).collect();
    if !active.is_empty() && active.len() <= n + 1 {
        if let Some((pxi, plower)) = kkt_polish(family, x, &xi, s, &active, &weights) {
            if plower >= best_lower {
                best_lower = plower;
                best_xi = pxi;
                gap = gap.min(1e-14 * scale);
            }
        }
    }
    lower = best_lower;
    if !lower.is_finite() {
        return Err(Error::Numerical {
            message: "envelope solver produced a non-finite value".into(),
            residual: f64::NAN,
        });
    }
    if gap > 1e-6 * scale {
        return Err(Error::Numerical {
            message: format!("envelope solver stopped after {steps} Newton steps"),
            residual: gap,
        });
    }
    Ok(DirectSolution {
        value: lower,
        gradient: best_xi,
        gap,
        newton_steps: steps,
    })
}

/// Solves `sum l_i grad g_i^*(xi) = x`, `sum l_i = 1`, `g_i^*(xi) = s` on
/// the active set and returns the refined maximizer with its objective.
fn kkt_polish(
    family: &PieceFamily,
    x: &[f64],
    xi0: &[f64],
    s0: f64,
    active: &[usize],
    weights: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let n = family.dimension;
    let k = active.len();
    let dim = n + 1 + k;
    let mut xi = xi0.to_vec();
    let mut s = s0;
    let total: f64 = active.iter().map(|&i| weights[i]).sum();
    let mut lam: Vec<f64> = active.iter().map(|&i| weights[i] / total).collect();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    for _ in 0..30 {
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        let mut res = DVector::<f64>::zeros(dim);
        for a in 0..n {
            res[a] = -x[a];
        }
        res[n] = -1.0;
        for (c, &i) in active.iter().enumerate() {
            let v = family.pieces[i].conjugate_derivatives(&xi, &mut g, &mut h);
            for a in 0..n {
                res[a] += lam[c] * g[a];
                for b in 0..n {
                    jac[(a, b)] += lam[c] * h[a * n + b];
                }
                jac[(a, n + 1 + c)] = g[a];
                jac[(n + 1 + c, a)] = g[a];
            }
            res[n] += lam[c];
            jac[(n, n + 1 + c)] = 1.0;
            res[n + 1 + c] = v - s;
            jac[(n + 1 + c, n)] = -1.0;
        }
        let rnorm = res.norm();
        if rnorm <= 1e-15 * (1.0 + norm2(x) + s.abs()) {
            break;
        }
        let step = jac.clone().lu().solve(&(-res))?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for a in 0..n {
            xi[a] += step[a];
        }
        s += step[n];
        for c in 0..k {
            lam[c] += step[n + 1 + c];
        }
    }
    if lam.iter().any(|&l| l < -1e-9) {
        return None;
    }
    let lower = dot(&xi, x) - family.conjugate(&xi);
    lower.is_finite().then_some((xi, lower))
}

/// Values on a uniform axis-aligned lattice, stored row-major with the last
/// axis varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || resolution.len() != n {
            return Err(Error::Input("grid box and resolution must share a dimension".into()));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Input("grid resolution must be at least 2 per axis".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Input("grid box must satisfy lower < upper".into()));
        }
        if values.len() != resolution.iter().product::<usize>() {
            return Err(Error::Input("grid value count does not match resolution".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("grid values must be finite".into()));
        }
        Ok(GridFunction {
            lower,
            upper,
            resolution,
            values,
        })
    }

    /// Samples `f` at every lattice node.
    pub fn sample<F>(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let total: usize = resolution.iter().product();
        let shell = GridFunction {
            lower,
            upper,
            resolution,
            values: Vec::new(),
        };
        let values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|idx| f(&shell.node(idx)))
            .collect();
        GridFunction::new(shell.lower, shell.upper, shell.resolution, values)
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.resolution[axis] - 1) as f64
    }

    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        if j + 1 == self.resolution[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + j as f64 * self.step(axis)
        }
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis]).map(|j| self.coordinate(axis, j)).collect()
    }

    /// Coordinates of the node with flat index `idx`.
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let n = self.dimension();
        let mut out = vec![0.0; n];
        for k in (0..n).rev() {
            let r = self.resolution[k];
            out[k] = self.coordinate(k, idx % r);
            idx /= r;
        }
        out
    }

    pub fn cell_diameter(&self) -> f64 {
        (0..self.dimension()).map(|k| self.step(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    fn locate(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        if x.len() != self.dimension() {
            return Err(Error::Input("query dimension differs from the grid".into()));
        }
        if !self.contains(x) {
            return Err(Error::Region("query lies outside the grid box".into()));
        }
        let mut cell = Vec::with_capacity(x.len());
        let mut frac = Vec::with_capacity(x.len());
        for (k, &v) in x.iter().enumerate() {
            let u = (v - self.lower[k]) / self.step(k);
            let j = (u.floor() as usize).min(self.resolution[k] - 2);
            cell.push(j);
            frac.push((u - j as f64).clamp(0.0, 1.0));
        }
        Ok((cell, frac))
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    /// Multilinear interpolation and its gradient.
    pub fn interpolate_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.dimension();
        let (cell, frac) = self.locate(x)?;
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let mut idx = vec![0usize; n];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            for k in 0..n {
                let bit = (corner >> k) & 1;
                idx[k] = cell[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            let v = self.values[self.flat(&idx)];
            value += w * v;
            for k in 0..n {
                let bit = (corner >> k) & 1;
                let mut dw = if bit == 1 { 1.0 } else { -1.0 } / self.step(k);
                for j in 0..n {
                    if j != k {
                        let bj = (corner >> j) & 1;
                        dw *= if bj == 1 { frac[j] } else { 1.0 - frac[j] };
                    }
                }
                grad[k] += dw * v;
            }
        }
        Ok((value, grad))
    }

    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.interpolate_with_gradient(x)?.0)
    }

    /// Largest and smallest forward difference quotient along `axis`.
    pub fn slope_range(&self, axis: usize) -> (f64, f64) {
        let r = self.resolution[axis];
        let stride: usize = self.resolution[axis + 1..].iter().product();
        let h = self.step(axis);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (idx, &v) in self.values.iter().enumerate() {
            if (idx / stride) % r + 1 < r {
                let d = (self.values[idx + stride] - v) / h;
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (lo, hi)
    }

    /// Plain-text dump: a `box` line, a `resolution` line, then values in
    /// row-major order, one lattice row per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "box {} {}", fmt(&self.lower), fmt(&self.upper));
        let res: Vec<String> = self.resolution.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(s, "resolution {}", res.join(" "));
        let row = *self.resolution.last().unwrap();
        for chunk in self.values.chunks(row) {
            let _ = writeln!(s, "{}", fmt(chunk));
        }
        s
    }

    /// Parses the output of [`GridFunction::dump`].
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |msg: &str| Error::Input(format!("grid dump: {msg}"));
        let boxline = lines.next().ok_or_else(|| bad("missing box line"))?;
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad number {t:?}"))))
                .collect()
        };
        let b = nums(boxline.strip_prefix("box").ok_or_else(|| bad("expected 'box'"))?)?;
        if b.is_empty() || b.len() % 2 != 0 {
            return Err(bad("box needs lower and upper corners"));
        }
        let n = b.len() / 2;
        let resline = lines.next().ok_or_else(|| bad("missing resolution line"))?;
        let resolution: Vec<usize> = resline
            .strip_prefix("resolution")
            .ok_or_else(|| bad("expected 'resolution'"))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad(&format!("bad resolution {t:?}"))))
            .collect::<Result<_>>()?;
        let mut values = Vec::new();
        for l in lines {
            values.extend(nums(l)?);
        }
        GridFunction::new(b[..n].to_vec(), b[n..].to_vec(), resolution, values)
    }
}

/// Lower convex hull of `(xs[i], fs[i])` for increasing `xs`.
fn lower_hull(xs: &[f64], fs: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (fs[i] - fs[a]) - (fs[b] - fs[a]) * (xs[i] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Discrete conjugate `out[j] = max_i slopes[j] xs[i] - fs[i]` in linear time,
/// for increasing `xs` and `slopes`.
pub fn legendre_1d(xs: &[f64], fs: &[f64], slopes: &[f64], out: &mut [f64]) {
    let hull = lower_hull(xs, fs);
    let mut k = 0;
    for (j, &s) in slopes.iter().enumerate() {
        while k + 1 < hull.len() {
            let (a, b) = (hull[k], hull[k + 1]);
            if (fs[b] - fs[a]) <= s * (xs[b] - xs[a]) {
                k += 1;
            } else {
                break;
            }
        }
        let i = hull[k];
        out[j] = s * xs[i] - fs[i];
    }
}

/// Replaces axis `axis` of `f` by its discrete conjugate on `slopes`.
fn conjugate_axis(values: &[f64], shape: &[usize], axis: usize, xs: &[f64], slopes: &[f64]) -> Vec<f64> {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let out_len = slopes.len();
    let lines: Vec<Vec<f64>> = (0..outer * stride)
        .into_par_iter()
        .map(|line| {
            let (o, i) = (line / stride, line % stride);
            let fs: Vec<f64> = (0..len).map(|j| values[(o * len + j) * stride + i]).collect();
            let mut out = vec![0.0; out_len];
            legendre_1d(xs, &fs, slopes, &mut out);
            out
        })
        .collect();
    let mut result = vec![0.0; outer * out_len * stride];
    for (line, vals) in lines.into_iter().enumerate() {
        let (o, i) = (line / stride, line % stride);
        for (j, v) in vals.into_iter().enumerate() {
            result[(o * out_len + j) * stride + i] = v;
        }
    }
    result
}

/// `f^*(xi) = max_x <xi, x> - f(x)` for `f` given on the product of
/// `src` axes, evaluated on the product of `dst` axes, one axis at a time:
/// `f^* = c_1[-c_2[-...c_n[f]]]`.
fn transform(values: &[f64], src: &[Vec<f64>], dst: &[Vec<f64>]) -> Vec<f64> {
    let n = src.len();
    let mut shape: Vec<usize> = src.iter().map(|a| a.len()).collect();
    let mut values = values.to_vec();
    for axis in (0..n).rev() {
        values = conjugate_axis(&values, &shape, axis, &src[axis], &dst[axis]);
        shape[axis] = dst[axis].len();
        if axis > 0 {
            for v in values.iter_mut() {
                *v = -*v;
            }
        }
    }
    values
}

/// Discrete Legendre transform `f^*(xi) = max_x <xi, x> - f(x)` evaluated
/// on the lattice `(dual_lower, dual_upper, dual_resolution)`.
pub fn discrete_legendre(
    f: &GridFunction,
    dual_lower: &[f64],
    dual_upper: &[f64],
    dual_resolution: &[usize],
) -> Result<GridFunction> {
    let n = f.dimension();
    if dual_lower.len() != n || dual_upper.len() != n || dual_resolution.len() != n {
        return Err(Error::Input("dual lattice must match the primal dimension".into()));
    }
    let shell = GridFunction {
        lower: dual_lower.to_vec(),
        upper: dual_upper.to_vec(),
        resolution: dual_resolution.to_vec(),
        values: Vec::new(),
    };
    let src: Vec<Vec<f64>> = (0..n).map(|k| f.axis(k)).collect();
    let dst: Vec<Vec<f64>> = (0..n).map(|k| shell.axis(k)).collect();
    let values = transform(&f.values, &src, &dst);
    GridFunction::new(shell.lower, shell.upper, shell.resolution, values)
}

/// Lattice approximation of `conv(g)` on a box.
#[derive(Clone, Debug)]
pub struct GridEnvelope {
    pub biconjugate: GridFunction,
    /// Bound on the slopes of `g` over the lattice.
    pub lipschitz: f64,
}

impl GridEnvelope {
    /// Samples `g` on a `resolution^n` lattice of the box and transforms
    /// twice. The dual axes are graded as `xi = A s^3` for uniform `s`, so
    /// small slopes (the flat faces of `conv(g)` around its minimum) get a
    /// fine dual spacing while the slope range of `g` is still covered.
    pub fn build<F>(g: F, lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = lower.len();
        if n > 3 {
            return Err(Error::Input("the lattice backend supports dimension <= 3".into()));
        }
        let res = vec![resolution; n];
        let primal = GridFunction::sample(lower.clone(), upper.clone(), res.clone(), g)?;
        let dual_res = if n <= 2 { 4 * resolution - 3 } else { resolution };
        let mut lipschitz: f64 = 0.0;
        let mut dual_axes = Vec::with_capacity(n);
        for k in 0..n {
            let (lo, hi) = primal.slope_range(k);
            let a = lo.abs().max(hi.abs()) * (1.0 + 1e-9) + 1e-12;
            lipschitz = lipschitz.max(a);
            let axis: Vec<f64> = (0..dual_res)
                .map(|j| {
                    let s = -1.0 + 2.0 * j as f64 / (dual_res - 1) as f64;
                    a * s * s * s
                })
                .filter(|xi| *xi >= lo - 1e-9 * a && *xi <= hi + 1e-9 * a)
                .collect();
            dual_axes.push(axis);
        }
        let primal_axes: Vec<Vec<f64>> = (0..n).map(|k| primal.axis(k)).collect();
        let conj = transform(&primal.values, &primal_axes, &dual_axes);
        let values = transform(&conj, &dual_axes, &primal_axes);
        Ok(GridEnvelope {
            biconjugate: GridFunction::new(lower, upper, res, values)?,
            lipschitz: lipschitz * (n as f64).sqrt(),
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.biconjugate.interpolate(x)
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.biconjugate.interpolate_with_gradient(x)
    }

    /// Agreement tolerance at `x`: `max(1e-4, 2 * cell diameter * L)` with
    /// `L` the larger of the interpolant slope on the cell of `x` and `local`.
    pub fn tolerance_at(&self, x: &[f64], local: f64) -> Result<f64> {
        let (_, g) = self.value_and_gradient(x)?;
        let l = norm2(&g).max(local);
        Ok((2.0 * self.biconjugate.cell_diameter() * l).max(1e-4))
    }
}

/// `conv(g)` for a piece family under a chosen backend.
#[derive(Clone, Debug)]
pub struct Envelope {
    family: Arc<PieceFamily>,
    backend: EnvelopeBackend,
    grid: Option<GridEnvelope>,
}

impl Envelope {
    /// Prepares the backend. The lattice backend needs `region`, the box it
    /// samples; the direct backend ignores it.
    pub fn new(
        family: Arc<PieceFamily>,
        backend: EnvelopeBackend,
        region: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let grid = match &backend {
            EnvelopeBackend::GridBiconjugate { resolution } => {
                let (lo, hi) = region
                    .ok_or_else(|| Error::Input("the lattice backend needs a box".into()))?;
                let fam = family.clone();
                Some(GridEnvelope::build(move |x| fam.min_value(x).0, lo, hi, *resolution)?)
            }
            EnvelopeBackend::DirectConcaveMax {
                tolerance,
                max_iterations,
            } => {
                if !(*tolerance > 0.0) || *max_iterations == 0 {
                    return Err(Error::Input("direct backend needs a positive tolerance and cap".into()));
                }
                None
            }
        };
        Ok(Envelope {
            family,
            backend,
            grid,
        })
    }

    pub fn family(&self) -> &PieceFamily {
        &self.family
    }

    pub fn backend(&self) -> &EnvelopeBackend {
        &self.backend
    }

    pub fn grid(&self) -> Option<&GridEnvelope> {
        self.grid.as_ref()
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match (&self.backend, &self.grid) {
            (EnvelopeBackend::GridBiconjugate { .. }, Some(g)) => g.value_and_gradient(x),
            (
                EnvelopeBackend::DirectConcaveMax {
                    tolerance,
                    max_iterations,
                },
                _,
            ) => {
                let sol = direct_concave_max(&self.family, x, *tolerance, *max_iterations)?;
                Ok((sol.value, sol.gradient))
            }
            _ => unreachable!(),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }
}

/// One-shot envelope evaluation.
pub fn convex_envelope_eval(
    family: Arc<PieceFamily>,
    x: &[f64],
    backend: EnvelopeBackend,
    region: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<f64> {
    Envelope::new(family, backend, region)?.value(x)
}

/// Outcome of comparing the lattice and direct backends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub points: usize,
    pub max_difference: f64,
    /// Smallest per-point tolerance that was applied.
    pub tolerance: f64,
}

/// Largest `|grad g_i|` over a one-cell stencil around the contact points
/// `grad g_i^*(xi)` of the pieces active at `xi`.
fn contact_lipschitz(family: &PieceFamily, xi: &[f64], cell: f64) -> f64 {
    let n = family.dimension;
    let vals = conj_values(family, xi);
    let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-9 * (1.0 + top.abs());
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    let mut out = vec![0.0; n];
    let mut best: f64 = 0.0;
    for (p, _) in family.pieces.iter().zip(&vals).filter(|(_, v)| **v >= top - tie) {
        p.conjugate_derivatives(xi, &mut grad, &mut hess);
        for k in 0..=2 * n {
            let mut q = grad.clone();
            if k > 0 {
                q[(k - 1) / 2] += if k % 2 == 0 { cell } else { -cell };
            }
            p.gradient(&q, &mut out);
            best = best.max(norm2(&out));
        }
    }
    best
}

/// Compares `grid` against the direct solver at `points`, failing with
/// [`Error::BackendDisagreement`] on the first point beyond tolerance. The
/// local Lipschitz bound at a point is the larger of the backend slopes
/// there and the slope of `g` within one cell of the contact points, where
/// the lattice samples `g`.
pub fn cross_validate(family: &PieceFamily, grid: &GridEnvelope, points: &[Vec<f64>]) -> Result<CrossValidation> {
    let cell = grid.biconjugate.cell_diameter();
    let rows: Vec<Result<(f64, f64, f64)>> = points
        .par_iter()
        .map(|x| {
            let a = grid.value(x)?;
            let sol = direct_concave_max(family, x, 1e-12, 10_000)?;
            let local = norm2(&sol.gradient).max(contact_lipschitz(family, &sol.gradient, cell));
            let tol = grid.tolerance_at(x, local)?;
            Ok((a, sol.value, tol))
        })
        .collect();
    let mut max_difference: f64 = 0.0;
    let mut tolerance = f64::INFINITY;
    for (x, row) in points.iter().zip(rows) {
        let (a, b, tol) = row?;
        let diff = (a - b).abs();
        if diff > tol {
            return Err(Error::BackendDisagreement {
                point: x.clone(),
                grid: a,
                direct: b,
                tolerance: tol,
            });
        }
        max_difference = max_difference.max(diff);
        tolerance = tolerance.min(tol);
    }
    Ok(CrossValidation {
        points: points.len(),
        max_difference,
        tolerance,
    })
}
