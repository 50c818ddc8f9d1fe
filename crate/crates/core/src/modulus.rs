//! Moduli of continuity and the functions derived from them.
//!
//! A modulus `omega` is concave, strictly increasing, vanishes at zero and
//! is unbounded. From it we derive its antiderivative `phi`, its inverse
//! `omega^-1`, the conjugate `phi^*` (the antiderivative of `omega^-1`) and
//! `phi^-1`. Power-type moduli use closed forms; tabulated moduli are
//! piecewise linear and integrated with adaptive Simpson quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a modulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModulusSpec {
    /// `omega(t) = K t^alpha`
    Power {
        #[serde(rename = "K")]
        k: f64,
        alpha: f64,
    },
    /// Piecewise-linear interpolation of samples `(t_i, omega_i)`, extended
    /// linearly past the last sample with the final slope.
    Tabulated { t: Vec<f64>, omega: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Table {
    t: Vec<f64>,
    w: Vec<f64>,
    slopes: Vec<f64>,
    phi_knots: Vec<f64>,
    phi_star_knots: Vec<f64>,
}

/// A validated modulus with evaluators for `phi`, `phi^*`, `omega^-1` and
/// `phi^-1`.
#[derive(Clone, Debug)]
pub struct Modulus {
    spec: ModulusSpec,
    table: Option<Table>,
}

const SIMPSON_TOLERANCE: f64 = 1e-12;
const SIMPSON_MAX_INTERVALS: usize = 1 << 20;

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut budget = max_intervals;
    simpson_step(f, a, b, fa, fm, fb, whole, tol, &mut budget)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    budget: &mut usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if *budget <= 1 || delta.abs() <= 15.0 * tol || (b - a) <= f64::EPSILON * m.abs().max(1.0) {
        return left + right + delta / 15.0;
    }
    *budget -= 1;
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, budget)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, budget)
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} requires a finite argument >= 0, got {v}")))
    }
}

impl Table {
    fn segment(knots: &[f64], x: f64) -> usize {
        // Index k with knots[k] <= x < knots[k+1]; the last segment extends to infinity.
        match knots.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => k.min(knots.len() - 2),
            Err(k) => k.saturating_sub(1).min(knots.len() - 2),
        }
    }

    fn omega(&self, t: f64) -> f64 {
        let k = Table::segment(&self.t, t);
        self.w[k] + self.slopes[k] * (t - self.t[k])
    }

    fn omega_inv(&self, s: f64) -> f64 {
        let k = Table::segment(&self.w, s);
        self.t[k] + (s - self.w[k]) / self.slopes[k]
    }

    fn omega_inv_derivative(&self, s: f64) -> f64 {
        1.0 / self.slopes[Table::segment(&self.w, s)]
    }

    fn phi(&self, t: f64) -> f64 {
        let k = Table::segment(&self.t, t);
        let f = |u: f64| self.omega(u);
        self.phi_knots[k] + adaptive_simpson(&f, self.t[k], t, SIMPSON_TOLERANCE, SIMPSON_MAX_INTERVALS)
    }

    fn phi_star(&self, s: f64) -> f64 {
        let k = Table::segment(&self.w, s);
        let f = |u: f64| self.omega_inv(u);
        self.phi_star_knots[k]
            + adaptive_simpson(&f, self.w[k], s, SIMPSON_TOLERANCE, SIMPSON_MAX_INTERVALS)
    }
}

impl Modulus {
    pub fn power(k: f64, alpha: f64) -> Result<Self> {
        Modulus::new(ModulusSpec::Power { k, alpha })
    }

    pub fn tabulated(t: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        Modulus::new(ModulusSpec::Tabulated { t, omega })
    }

    pub fn new(spec: ModulusSpec) -> Result<Self> {
        match &spec {
            ModulusSpec::Power { k, alpha } => {
                if !(*k > 0.0 && k.is_finite()) {
                    return Err(Error::Input(format!("modulus constant K must be > 0, got {k}")));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(Error::Input(format!("modulus exponent must lie in (0,1], got {alpha}")));
                }
                Ok(Modulus { spec, table: None })
            }
            ModulusSpec::Tabulated { t, omega } => {
                let table = build_table(t, omega)?;
                Ok(Modulus {
                    spec,
                    table: Some(table),
                })
            }
        }
    }

    pub fn spec(&self) -> &ModulusSpec {
        &self.spec
    }

    /// `(K, alpha)` for power-type moduli.
    pub fn power_parameters(&self) -> Option<(f64, f64)> {
        match self.spec {
            ModulusSpec::Power { k, alpha } => Some((k, alpha)),
            ModulusSpec::Tabulated { .. } => None,
        }
    }

    pub fn omega(&self, t: f64) -> Result<f64> {
        check_nonneg("omega", t)?;
        Ok(self.omega_raw(t))
    }

    pub fn phi(&self, t: f64) -> Result<f64> {
        check_nonneg("phi", t)?;
        Ok(self.phi_raw(t))
    }

    pub fn phi_conjugate(&self, s: f64) -> Result<f64> {
        check_nonneg("phi_conjugate", s)?;
        Ok(self.phi_star_raw(s))
    }

    pub fn omega_inverse(&self, s: f64) -> Result<f64> {
        check_nonneg("omega_inverse", s)?;
        Ok(self.omega_inv_raw(s))
    }

    pub fn phi_inverse(&self, v: f64) -> Result<f64> {
        check_nonneg("phi_inverse", v)?;
        Ok(self.phi_inv_raw(v))
    }

    // The `_raw` evaluators clamp negative arguments to zero and are meant
    // for inner loops where the argument is a norm.

    pub(crate) fn omega_raw(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match (&self.spec, &self.table) {
            (ModulusSpec::Power { k, alpha }, _) => k * t.powf(*alpha),
            (_, Some(tab)) => tab.omega(t),
            _ => unreachable!(),
        }
    }

    pub(crate) fn phi_raw(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match (&self.spec, &self.table) {
            (ModulusSpec::Power { k, alpha }, _) => k * t.powf(1.0 + alpha) / (1.0 + alpha),
            (_, Some(tab)) => tab.phi(t),
            _ => unreachable!(),
        }
    }

    pub(crate) fn omega_inv_raw(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match (&self.spec, &self.table) {
            (ModulusSpec::Power { k, alpha }, _) => (s / k).powf(1.0 / alpha),
            (_, Some(tab)) => tab.omega_inv(s),
            _ => unreachable!(),
        }
    }

    /// Derivative of `omega^-1`, i.e. the second derivative of `phi^*`.
    pub(crate) fn omega_inv_derivative_raw(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match (&self.spec, &self.table) {
            (ModulusSpec::Power { k, alpha }, _) => {
                if *alpha == 1.0 {
                    1.0 / k
                } else {
                    (s / k).powf(1.0 / alpha - 1.0) / (alpha * k)
                }
            }
            (_, Some(tab)) => tab.omega_inv_derivative(s),
            _ => unreachable!(),
        }
    }

    pub(crate) fn phi_star_raw(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match (&self.spec, &self.table) {
            (ModulusSpec::Power { k, alpha }, _) => {
                alpha / (1.0 + alpha) * k.powf(-1.0 / alpha) * s.powf(1.0 + 1.0 / alpha)
            }
            (_, Some(tab)) => tab.phi_star(s),
            _ => unreachable!(),
        }
    }

    pub(crate) fn phi_inv_raw(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        match &self.spec {
            ModulusSpec::Power { k, alpha } => ((1.0 + alpha) * v / k).powf(1.0 / (1.0 + alpha)),
            ModulusSpec::Tabulated { .. } => {
                if v == 0.0 {
                    return 0.0;
                }
                let mut hi = 1.0;
                while self.phi_raw(hi) < v {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.phi_raw(mid) < v {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

fn build_table(t: &[f64], omega: &[f64]) -> Result<Table> {
    if t.len() != omega.len() {
        return Err(Error::Input("tabulated modulus: t and omega lengths differ".into()));
    }
    let mut ts = t.to_vec();
    let mut ws = omega.to_vec();
    if ts.iter().chain(&ws).any(|v| !v.is_finite()) {
        return Err(Error::Input("tabulated modulus: non-finite sample".into()));
    }
    match ts.first() {
        None => return Err(Error::Input("tabulated modulus needs samples".into())),
        Some(&t0) if t0 < 0.0 => {
            return Err(Error::Input("tabulated modulus: negative abscissa".into()))
        }
        Some(&t0) if t0 > 0.0 => {
            ts.insert(0, 0.0);
            ws.insert(0, 0.0);
        }
        _ => {
            if ws[0] != 0.0 {
                return Err(Error::Input("tabulated modulus must satisfy omega(0) = 0".into()));
            }
        }
    }
    if ts.len() < 2 {
        return Err(Error::Input("tabulated modulus needs at least one positive sample".into()));
    }
    let mut slopes = Vec::with_capacity(ts.len() - 1);
    for k in 0..ts.len() - 1 {
        if !(ts[k + 1] > ts[k]) {
            return Err(Error::Input(format!("tabulated modulus: t not strictly increasing at {}", k + 1)));
        }
        if !(ws[k + 1] > ws[k]) {
            return Err(Error::Input(format!(
                "tabulated modulus: omega not strictly increasing at {}",
                k + 1
            )));
        }
        slopes.push((ws[k + 1] - ws[k]) / (ts[k + 1] - ts[k]));
    }
    for k in 1..slopes.len() {
        if slopes[k] > slopes[k - 1] * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::Input(format!("tabulated modulus is not concave at sample {k}")));
        }
    }
    if !(*slopes.last().unwrap() > 0.0) {
        return Err(Error::Input("tabulated modulus has zero final slope".into()));
    }
    let mut tab = Table {
        t: ts,
        w: ws,
        slopes,
        phi_knots: Vec::new(),
        phi_star_knots: Vec::new(),
    };
    let mut phi_knots = vec![0.0];
    let mut phi_star_knots = vec![0.0];
    for k in 0..tab.t.len() - 1 {
        let f = |u: f64| tab.omega(u);
        let g = |u: f64| tab.omega_inv(u);
        let a = adaptive_simpson(&f, tab.t[k], tab.t[k + 1], SIMPSON_TOLERANCE, SIMPSON_MAX_INTERVALS);
        let b = adaptive_simpson(&g, tab.w[k], tab.w[k + 1], SIMPSON_TOLERANCE, SIMPSON_MAX_INTERVALS);
        phi_knots.push(phi_knots[k] + a);
        phi_star_knots.push(phi_star_knots[k] + b);
    }
    tab.phi_knots = phi_knots;
    tab.phi_star_knots = phi_star_knots;
    Ok(tab)
}
