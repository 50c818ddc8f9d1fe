//! Deterministic tangency-data generators used throughout the test suite.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::TangencyProblem;
use crate::geometry::{norm2, scale};
use crate::sampling::{stream_rng, unit_vector};

/// Generator parameters, recorded next to emitted problem files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FixtureSpec {
    Sphere { points: usize, dimension: usize, radius: f64 },
    Cusp { h_min: f64, h_max: f64, count: usize },
    Random { body: RandomBody, points: usize, noise: f64, seed: u64 },
    Stadium { points: usize, length: f64, radius: f64 },
}

impl FixtureSpec {
    pub fn generate(&self) -> Result<TangencyProblem> {
        match self {
            FixtureSpec::Sphere {
                points,
                dimension,
                radius,
            } => gen_sphere_data(*points, *dimension, *radius),
            FixtureSpec::Cusp { h_min, h_max, count } => gen_cusp_curve_data(*h_min, *h_max, *count),
            FixtureSpec::Random {
                body,
                points,
                noise,
                seed,
            } => gen_random_convex_data(body, *points, *noise, *seed),
            FixtureSpec::Stadium {
                points,
                length,
                radius,
            } => gen_stadium_data(*points, *length, *radius),
        }
    }
}

/// Body from which random data is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RandomBody {
    /// `x^2/a^2 + y^2/b^2 = 1`.
    Ellipse { a: f64, b: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    Sphere { dimension: usize, radius: f64 },
}

impl RandomBody {
    /// Smallest radius of curvature of the boundary.
    pub fn min_curvature_radius(&self) -> f64 {
        match *self {
            RandomBody::Ellipse { a, b } => {
                let (lo, hi) = (a.min(b), a.max(b));
                lo * lo / hi
            }
            RandomBody::Ellipsoid { a, b, c } => {
                let lo = a.min(b).min(c);
                let hi = a.max(b).max(c);
                lo * lo / hi
            }
            RandomBody::Sphere { radius, .. } => radius,
        }
    }
}

fn problem(points: Vec<Vec<f64>>, normals: Vec<Vec<f64>>) -> Result<TangencyProblem> {
    TangencyProblem::euclidean(points.into_iter().zip(normals).collect())
}

fn unit(v: &[f64]) -> Vec<f64> {
    scale(v, 1.0 / norm2(v))
}

/// Points of the sphere of radius `radius` about the origin with `N(x) = x/|x|`:
/// equally spaced on a circle, a Fibonacci lattice on the 2-sphere, seeded
/// directions in higher dimension.
pub fn gen_sphere_data(n_points: usize, dimension: usize, radius: f64) -> Result<TangencyProblem> {
    if n_points == 0 {
        return Err(Error::Input("need at least one point".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Input(format!("radius must be positive, got {radius}")));
    }
    let dirs: Vec<Vec<f64>> = match dimension {
        0 => return Err(Error::Input("dimension must be >= 1".into())),
        1 => {
            if n_points > 2 {
                return Err(Error::Input("a 0-sphere has only two points".into()));
            }
            [1.0, -1.0][..n_points].iter().map(|&s| vec![s]).collect()
        }
        2 => (0..n_points)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n_points as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n_points)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n_points as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * i as f64;
                    unit(&[rho * a.cos(), rho * a.sin(), z])
                })
                .collect()
        }
        n => {
            let mut rng = stream_rng(0, 0x5fe3);
            (0..n_points).map(|_| unit_vector(&mut rng, n)).collect()
        }
    };
    let points = dirs.iter().map(|d| scale(d, radius)).collect();
    problem(points, dirs)
}

/// Slope of `t -> |t|^{3/2}`.
fn cusp_slope(t: f64) -> f64 {
    1.5 * t.abs().sqrt() * t.signum()
}

/// Points `(t, |t|^{3/2} - 1)` at `t = 0` and `t = +-h_k`, with `count`
/// geometrically spaced `h_k` from `h_min` to `h_max`, and outward normals
/// `(f'(t), -1)/sqrt(1 + f'^2)` pointing away from the region above the curve.
pub fn gen_cusp_curve_data(h_min: f64, h_max: f64, count: usize) -> Result<TangencyProblem> {
    if !(h_min > 0.0 && h_min < h_max && h_max <= 2.0) {
        return Err(Error::Input(format!(
            "need 0 < h_min < h_max <= 2, got h_min = {h_min}, h_max = {h_max}"
        )));
    }
    if count == 0 {
        return Err(Error::Input("count must be >= 1".into()));
    }
    let hs: Vec<f64> = if count == 1 {
        vec![h_min]
    } else {
        let ratio = (h_max / h_min).ln() / (count - 1) as f64;
        (0..count).map(|k| h_min * (ratio * k as f64).exp()).collect()
    };
    let mut ts = vec![0.0];
    for &h in &hs {
        ts.push(h);
        ts.push(-h);
    }
    let points = ts.iter().map(|&t| vec![t, t.abs().powf(1.5) - 1.0]).collect();
    let normals = ts
        .iter()
        .map(|&t| {
            let s = cusp_slope(t);
            let len = (1.0 + s * s).sqrt();
            vec![s / len, -1.0 / len]
        })
        .collect();
    problem(points, normals)
}

/// Random points of an ellipse, ellipsoid or sphere with exact outward
/// normals, each perturbed by `noise` times a standard Gaussian vector and
/// renormalized.
pub fn gen_random_convex_data(body: &RandomBody, n_points: usize, noise: f64, seed: u64) -> Result<TangencyProblem> {
    if n_points == 0 {
        return Err(Error::Input("need at least one point".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Input(format!("noise must be >= 0, got {noise}")));
    }
    let axes: Vec<f64> = match *body {
        RandomBody::Ellipse { a, b } => vec![a, b],
        RandomBody::Ellipsoid { a, b, c } => vec![a, b, c],
        RandomBody::Sphere { dimension, radius } => vec![radius; dimension],
    };
    if axes.is_empty() || axes.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Input("semi-axes must be positive".into()));
    }
    let n = axes.len();
    let mut rng = stream_rng(seed, 0xe111);
    let mut points = Vec::with_capacity(n_points);
    let mut normals = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let u = unit_vector(&mut rng, n);
        points.push(u.iter().zip(&axes).map(|(ui, a)| ui * a).collect());
        let normal: Vec<f64> = unit(&u.iter().zip(&axes).map(|(ui, a)| ui / a).collect::<Vec<_>>());
        let perturbed: Vec<f64> = if noise > 0.0 {
            normal
                .iter()
                .map(|v| v + noise * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            normal
        };
        normals.push(unit(&perturbed));
    }
    problem(points, normals)
}

/// Points spread along the boundary of the stadium `[0, length] x {0} + B(0, radius)`
/// by arc length, starting at `(0, radius)`.
pub fn gen_stadium_data(n_points: usize, length: f64, radius: f64) -> Result<TangencyProblem> {
    if n_points == 0 {
        return Err(Error::Input("need at least one point".into()));
    }
    if !(radius > 0.0 && length >= 0.0) {
        return Err(Error::Input("stadium needs radius > 0 and length >= 0".into()));
    }
    let arc = std::f64::consts::PI * radius;
    let perimeter = 2.0 * length + 2.0 * arc;
    let mut points = Vec::with_capacity(n_points);
    let mut normals = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let s = perimeter * i as f64 / n_points as f64;
        let (p, nrm) = if s < length {
            (vec![length - s, radius], vec![0.0, 1.0])
        } else if s < length + arc {
            let a = std::f64::consts::FRAC_PI_2 + (s - length) / radius;
            (vec![radius * a.cos(), radius * a.sin()], vec![a.cos(), a.sin()])
        } else if s < 2.0 * length + arc {
            (vec![s - length - arc, -radius], vec![0.0, -1.0])
        } else {
            let a = -std::f64::consts::FRAC_PI_2 + (s - 2.0 * length - arc) / radius;
            (vec![length + radius * a.cos(), radius * a.sin()], vec![a.cos(), a.sin()])
        };
        points.push(p);
        normals.push(nrm);
    }
    problem(points, normals)
}
