//! Pairwise feasibility tests for finite tangency data.
//!
//! A datum is a point `y` with a unit outer normal `N(y)` (or, in an `l^p`
//! space, a unit dual functional `D(y)`). Each regularity class comes with
//! an inequality that must hold for every ordered pair `(x, y)` of data:
//!
//! * `C^{1,1}` at radius `r`:   `<N(y), y-x> >= r/2 ||N(x)-N(y)||^2`
//! * `C^{1,omega}` at `delta`:  `<N(y), y-x> >= ||N(x)-N(y)|| omega^-1(delta ||N(x)-N(y)||)`
//! * `C^{1,alpha}` at `delta`:  `D(y)(y-x) >= delta ||D(x)-D(y)||_*^{1+1/alpha}`
//!
//! The inequalities are monotone in the constant, so the sharp constant is
//! the minimum over pairs of a closed-form per-pair ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm2, sub, NormSpace};
use crate::modulus::Modulus;

/// Unit-norm check applied to every normal.
pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Relative slack accepted as feasible.
pub const SLACK_TOLERANCE: f64 = 1e-12;

/// One tangency datum. Under an `l^p` norm `normal` holds the coefficients
/// of the dual functional `D(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
}

/// Finite tangency data in a normed space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyProblem {
    pub space: NormSpace,
    pub data: Vec<Datum>,
}

impl TangencyProblem {
    pub fn new(space: NormSpace, data: Vec<Datum>) -> Result<Self> {
        let problem = TangencyProblem { space, data };
        problem.validate()?;
        Ok(problem)
    }

    pub fn euclidean(data: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let n = data.first().map(|d| d.0.len()).unwrap_or(0);
        TangencyProblem::new(
            NormSpace::euclidean(n),
            data.into_iter()
                .map(|(point, normal)| Datum { point, normal })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.data.is_empty() {
            return Err(Error::Input("tangency problem needs at least one datum".into()));
        }
        let n = self.space.dimension;
        for (i, d) in self.data.iter().enumerate() {
            if d.point.len() != n || d.normal.len() != n {
                return Err(Error::Input(format!("datum {i}: expected dimension {n}")));
            }
            if d.point.iter().chain(&d.normal).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("datum {i}: non-finite coordinate")));
            }
            let len = self.space.dual_norm(&d.normal);
            if (len - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Input(format!(
                    "datum {i}: normal must have unit (dual) norm, got {len}"
                )));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.data.iter().map(|d| d.point.clone()).collect()
    }

    /// Same data with every point multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TangencyProblem {
        TangencyProblem {
            space: self.space,
            data: self
                .data
                .iter()
                .map(|d| Datum {
                    point: d.point.iter().map(|v| v * factor).collect(),
                    normal: d.normal.clone(),
                })
                .collect(),
        }
    }

    pub fn require_euclidean(&self) -> Result<()> {
        if self.space.is_euclidean() {
            Ok(())
        } else {
            Err(Error::Input("this test requires a Euclidean space".into()))
        }
    }
}

/// Why a scan was declared infeasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    /// An ordered pair violates the inequality.
    Violation,
    /// Two data share a point with different normals.
    DuplicatePoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Result of a pairwise scan.
///
/// `feasible` refers to the constant that was tested; `extremal_constant`
/// is the sharp constant (`r_max` or `delta_max`) of the data, `+inf` when
/// no pair constrains it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub tested_constant: Option<f64>,
    pub extremal_constant: f64,
    pub violating_pair: Option<(usize, usize)>,
    pub diagnostic: Option<Diagnostic>,
    /// Smallest slack normalized by `1 + ||y - x||`.
    pub worst_margin: f64,
    pub margin_histogram: Vec<HistogramBin>,
}

/// Ingredients of the inequalities for one ordered pair `(x = data[i], y = data[j])`.
#[derive(Clone, Copy, Debug)]
struct PairTerms {
    i: usize,
    j: usize,
    /// `<N(y), y - x>`
    lhs: f64,
    /// `||N(x) - N(y)||` (dual norm)
    normal_gap: f64,
    /// `||y - x||`
    separation: f64,
}

fn pair_terms(problem: &TangencyProblem) -> Vec<PairTerms> {
    let data = &problem.data;
    let space = problem.space;
    (0..data.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = &data[i];
            data.iter().enumerate().filter(move |(j, _)| *j != i).map(move |(j, y)| {
                let diff = sub(&y.point, &x.point);
                PairTerms {
                    i,
                    j,
                    lhs: dot(&y.normal, &diff),
                    normal_gap: space.dual_norm(&sub(&x.normal, &y.normal)),
                    separation: space.norm(&diff),
                }
            })
        })
        .collect()
}

fn tolerance_for(t: &PairTerms) -> f64 {
    SLACK_TOLERANCE * (1.0 + t.separation)
}

fn is_duplicate(t: &PairTerms) -> bool {
    t.separation == 0.0 && t.normal_gap > UNIT_TOLERANCE
}

/// Generic scan: `rhs(b)` is the right-hand side as a function of the
/// normal gap at the tested constant, `ratio(a, b)` the per-pair sharp
/// constant for `b > 0` and `a >= 0`.
fn scan(
    problem: &TangencyProblem,
    tested: Option<f64>,
    rhs: impl Fn(f64) -> f64 + Sync,
    ratio: impl Fn(f64, f64) -> f64 + Sync,
) -> FeasibilityReport {
    let terms = pair_terms(problem);
    let mut extremal = f64::INFINITY;
    let mut worst = f64::INFINITY;
    let mut worst_pair = None;
    let mut duplicate = None;
    let mut margins = Vec::with_capacity(terms.len());
    for t in &terms {
        if is_duplicate(t) && duplicate.is_none() {
            duplicate = Some((t.i, t.j));
        }
        let pair_ratio = if t.normal_gap <= 0.0 {
            if t.lhs >= -tolerance_for(t) {
                f64::INFINITY
            } else {
                0.0
            }
        } else if t.lhs <= 0.0 {
            0.0
        } else {
            ratio(t.lhs, t.normal_gap)
        };
        extremal = extremal.min(pair_ratio);
        let slack = match tested {
            Some(_) => {
                if t.normal_gap == 0.0 {
                    t.lhs
                } else {
                    t.lhs - rhs(t.normal_gap)
                }
            }
            None => t.lhs,
        };
        let margin = slack / (1.0 + t.separation);
        margins.push(margin);
        if margin < worst {
            worst = margin;
            worst_pair = Some((t.i, t.j));
        }
    }
    if duplicate.is_some() {
        extremal = 0.0;
    }
    let feasible = duplicate.is_none()
        && match tested {
            Some(_) => worst >= -SLACK_TOLERANCE,
            None => extremal > 0.0,
        };
    let (violating_pair, diagnostic) = if feasible {
        (None, None)
    } else if let Some(pair) = duplicate {
        (Some(pair), Some(Diagnostic::DuplicatePoint))
    } else {
        // Without a tested constant the binding pair is the one realizing the
        // zero ratio, which is also the worst raw slack.
        (worst_pair, Some(Diagnostic::Violation))
    };
    FeasibilityReport {
        feasible,
        tested_constant: tested,
        extremal_constant: extremal,
        violating_pair,
        diagnostic,
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
        margin_histogram: histogram(&margins, 16),
    }
}

fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lower: lo + k as f64 * width,
            upper: lo + (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be a finite positive number, got {v}")))
    }
}

fn c11_ratio(a: f64, b: f64) -> f64 {
    2.0 * a / (b * b)
}

/// Tests the `C^{1,1}` inequality at radius `r`.
pub fn check_c11(problem: &TangencyProblem, r: f64) -> Result<FeasibilityReport> {
    problem.validate()?;
    problem.require_euclidean()?;
    require_positive("radius", r)?;
    Ok(scan(problem, Some(r), |b| 0.5 * r * b * b, c11_ratio))
}

/// Existence scan for `C^{1,1}`: feasible iff `r_max > 0`.
pub fn scan_c11(problem: &TangencyProblem) -> Result<FeasibilityReport> {
    problem.validate()?;
    problem.require_euclidean()?;
    Ok(scan(problem, None, |_| 0.0, c11_ratio))
}

/// Sharp radius `inf 2<N(y),y-x>/||N(y)-N(x)||^2` over ordered pairs.
pub fn max_c11_radius(problem: &TangencyProblem) -> Result<f64> {
    Ok(scan_c11(problem)?.extremal_constant)
}

/// Tests the `C^{1,omega}` inequality at `delta`.
pub fn check_c1omega(problem: &TangencyProblem, modulus: &Modulus, delta: f64) -> Result<FeasibilityReport> {
    problem.validate()?;
    problem.require_euclidean()?;
    require_positive("delta", delta)?;
    Ok(scan(
        problem,
        Some(delta),
        |b| b * modulus.omega_inv_raw(delta * b),
        |a, b| modulus.omega_raw(a / b) / b,
    ))
}

pub fn scan_c1omega(problem: &TangencyProblem, modulus: &Modulus) -> Result<FeasibilityReport> {
    problem.validate()?;
    problem.require_euclidean()?;
    Ok(scan(problem, None, |_| 0.0, |a, b| modulus.omega_raw(a / b) / b))
}

/// Sharp `delta` for the `C^{1,omega}` inequality.
pub fn max_c1omega_delta(problem: &TangencyProblem, modulus: &Modulus) -> Result<f64> {
    Ok(scan_c1omega(problem, modulus)?.extremal_constant)
}

fn require_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("alpha must lie in (0,1], got {alpha}")))
    }
}

/// Tests the dual-functional `C^{1,alpha}` inequality at `delta`.
pub fn check_c1alpha_dual(problem: &TangencyProblem, alpha: f64, delta: f64) -> Result<FeasibilityReport> {
    problem.validate()?;
    require_alpha(alpha)?;
    require_positive("delta", delta)?;
    let e = 1.0 + 1.0 / alpha;
    Ok(scan(problem, Some(delta), |b| delta * b.powf(e), |a, b| a / b.powf(e)))
}

pub fn scan_c1alpha_dual(problem: &TangencyProblem, alpha: f64) -> Result<FeasibilityReport> {
    problem.validate()?;
    require_alpha(alpha)?;
    let e = 1.0 + 1.0 / alpha;
    Ok(scan(problem, None, |_| 0.0, |a, b| a / b.powf(e)))
}

/// Sharp `delta` for the dual-functional `C^{1,alpha}` inequality.
pub fn max_c1alpha_delta(problem: &TangencyProblem, alpha: f64) -> Result<f64> {
    Ok(scan_c1alpha_dual(problem, alpha)?.extremal_constant)
}

/// `||N(x) - N(y)|| <= (2/r) ||y - x||`: the symmetrized consequence of the
/// `C^{1,1}` inequality. Returns the largest violation ratio observed.
pub fn symmetrized_lipschitz_ratio(problem: &TangencyProblem) -> f64 {
    let d = &problem.data;
    let mut worst: f64 = 0.0;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            let sep = norm2(&sub(&d[i].point, &d[j].point));
            if sep > 0.0 {
                worst = worst.max(norm2(&sub(&d[i].normal, &d[j].normal)) / sep);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize) -> TangencyProblem {
        TangencyProblem::euclidean(
            (0..n)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let u = vec![a.cos(), a.sin()];
                    (u.clone(), u)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn circle_is_feasible_with_zero_margin() {
        let rep = check_c11(&circle(12), 1.0).unwrap();
        assert!(rep.feasible);
        assert!(rep.worst_margin.abs() < 1e-12);
        assert!((rep.extremal_constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposing_normals_are_infeasible() {
        let p = TangencyProblem::euclidean(vec![
            (vec![0.0, 0.0], vec![0.0, 1.0]),
            (vec![1.0, 0.0], vec![0.0, -1.0]),
        ])
        .unwrap();
        for r in [1e-6, 1.0, 10.0] {
            let rep = check_c11(&p, r).unwrap();
            assert!(!rep.feasible);
            assert!(rep.violating_pair.is_some());
        }
        assert_eq!(max_c11_radius(&p).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_pair_radius() {
        let p = TangencyProblem::euclidean(vec![
            (vec![0.0, 1.0], vec![0.0, 1.0]),
            (vec![0.0, -1.0], vec![0.0, -1.0]),
        ])
        .unwrap();
        assert!((max_c11_radius(&p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_datum_is_unconstrained() {
        let p = TangencyProblem::euclidean(vec![(vec![0.0, 0.0], vec![0.0, 1.0])]).unwrap();
        assert_eq!(max_c11_radius(&p).unwrap(), f64::INFINITY);
        assert!(check_c1alpha_dual(&p, 0.5, 1e6).unwrap().feasible);
    }

    #[test]
    fn parallel_normals_give_infinite_radius() {
        let p = TangencyProblem::euclidean(vec![
            (vec![0.0, 1.0], vec![0.0, 1.0]),
            (vec![2.0, 1.0], vec![0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(max_c11_radius(&p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn duplicate_points_get_dedicated_diagnostic() {
        let p = TangencyProblem::euclidean(vec![
            (vec![0.0, 0.0], vec![0.0, 1.0]),
            (vec![0.0, 0.0], vec![1.0, 0.0]),
        ])
        .unwrap();
        let rep = check_c11(&p, 1.0).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.diagnostic, Some(Diagnostic::DuplicatePoint));
    }

    #[test]
    fn non_unit_normals_are_rejected() {
        let bad = TangencyProblem::euclidean(vec![(vec![0.0, 0.0], vec![0.0, 1.1])]);
        assert!(matches!(bad, Err(Error::Input(_))));
    }

    #[test]
    fn c11_needs_euclidean_space() {
        let space = NormSpace::lp(2, 1.5).unwrap();
        let xi = space.duality_map(&[1.0, 1.0]).unwrap();
        let p = TangencyProblem::new(
            space,
            vec![Datum {
                point: vec![0.0, 0.0],
                normal: xi.0,
            }],
        )
        .unwrap();
        assert!(check_c11(&p, 1.0).is_err());
        assert!(check_c1alpha_dual(&p, 0.5, 1.0).is_ok());
    }

    #[test]
    fn linear_modulus_reduces_to_c11() {
        let p = circle(9);
        let lin = Modulus::power(1.0, 1.0).unwrap();
        for delta in [0.1, 0.5, 0.50001, 2.0] {
            let a = check_c1omega(&p, &lin, delta).unwrap().feasible;
            let b = check_c11(&p, 2.0 * delta).unwrap().feasible;
            assert_eq!(a, b, "delta {delta}");
        }
    }
}
