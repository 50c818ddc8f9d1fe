//! Boundary geometry as text: ordered polylines, OBJ meshes and CSV rows.

use rayon::prelude::*;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::format::Body;
use crate::geometry::axpy;
use crate::sampling::SamplingOptions;

impl Body {
    pub fn interior_point(&self) -> Vec<f64> {
        match self {
            Body::C11(b) => b.interior_point(),
            Body::C1Omega(b) => b.interior_point(),
        }
    }

    /// Boundary point on the ray from `origin` along `dir`.
    pub fn ray_point(&self, origin: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
        let t = match self {
            Body::C11(b) => b.ray_exit(origin, dir)?,
            Body::C1Omega(b) => b.ray_exit(origin, dir)?,
        };
        Ok(axpy(origin, t, dir))
    }

    /// Outer unit normal at a boundary point.
    pub fn normal(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            Body::C11(b) => b.signed_distance_gradient(s),
            Body::C1Omega(b) => b.normal_at(s),
        }
    }

    /// `b_V(x)` for C^{1,1} bodies and `F(x) - 1` otherwise; zero on the boundary.
    pub fn level(&self, x: &[f64]) -> Result<f64> {
        match self {
            Body::C11(b) => b.signed_distance(x),
            Body::C1Omega(b) => Ok(b.eval_f(x)? - 1.0),
        }
    }

    pub fn level_name(&self) -> &'static str {
        match self {
            Body::C11(_) => "b_v",
            Body::C1Omega(_) => "f_minus_one",
        }
    }

    pub fn sample_boundary_with(&self, count: usize, seed: u64, opts: &SamplingOptions) -> Result<Vec<Vec<f64>>> {
        match self {
            Body::C11(b) => b.sample_boundary_with(count, seed, opts),
            Body::C1Omega(b) => b.sample_boundary_with(count, seed, opts),
        }
    }
}

fn write_coords(out: &mut String, v: &[f64]) {
    for (k, c) in v.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        write!(out, "{c}").unwrap();
    }
}

/// `count` boundary points of a planar body at equally spaced angles about
/// its interior point, one `x y` line each.
pub fn export_polyline(body: &Body, count: usize) -> Result<String> {
    if body.dimension() != 2 {
        return Err(Error::Input("polyline export needs a planar body".into()));
    }
    if count < 3 {
        return Err(Error::Input("polyline export needs at least 3 vertices".into()));
    }
    let o = body.interior_point();
    let pts: Vec<Result<Vec<f64>>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / count as f64;
            body.ray_point(&o, &[a.cos(), a.sin()])
        })
        .collect();
    let mut out = String::new();
    for p in pts {
        write_coords(&mut out, &p?);
        out.push('\n');
    }
    Ok(out)
}

/// Triangulated boundary. Planar bodies give one polygon face; bodies in
/// R^3 give a latitude-longitude mesh of ray exits with about `count`
/// vertices.
pub fn export_obj(body: &Body, count: usize) -> Result<String> {
    let o = body.interior_point();
    let mut out = String::from("# convex body boundary\n");
    match body.dimension() {
        2 => {
            let poly = export_polyline(body, count)?;
            let mut n = 0;
            for line in poly.lines() {
                writeln!(out, "v {line} 0").unwrap();
                n += 1;
            }
            out.push('f');
            for i in 1..=n {
                write!(out, " {i}").unwrap();
            }
            out.push('\n');
        }
        3 => {
            let lat = ((count as f64 / 2.0).sqrt().round() as usize).max(2);
            let lon = (2 * lat).max(3);
            let mut dirs = vec![vec![0.0, 0.0, 1.0]];
            for i in 1..lat {
                let theta = std::f64::consts::PI * i as f64 / lat as f64;
                for j in 0..lon {
                    let ph = std::f64::consts::TAU * j as f64 / lon as f64;
                    dirs.push(vec![theta.sin() * ph.cos(), theta.sin() * ph.sin(), theta.cos()]);
                }
            }
            dirs.push(vec![0.0, 0.0, -1.0]);
            let pts: Vec<Result<Vec<f64>>> = dirs.par_iter().map(|d| body.ray_point(&o, d)).collect();
            for p in pts {
                out.push_str("v ");
                write_coords(&mut out, &p?);
                out.push('\n');
            }
            let ring = |i: usize, j: usize| 2 + (i - 1) * lon + (j % lon);
            let south = dirs.len();
            for j in 0..lon {
                writeln!(out, "f 1 {} {}", ring(1, j), ring(1, j + 1)).unwrap();
            }
            for i in 1..lat - 1 {
                for j in 0..lon {
                    let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                    writeln!(out, "f {a} {c} {d}").unwrap();
                    writeln!(out, "f {a} {d} {b}").unwrap();
                }
            }
            for j in 0..lon {
                writeln!(out, "f {south} {} {}", ring(lat - 1, j + 1), ring(lat - 1, j)).unwrap();
            }
        }
        n => return Err(Error::Input(format!("OBJ export needs dimension 2 or 3, got {n}"))),
    }
    Ok(out)
}

/// Seeded ray-cast boundary samples as CSV rows of point, normal and level value.
pub fn export_csv(body: &Body, count: usize, seed: u64, opts: &SamplingOptions) -> Result<String> {
    let n = body.dimension();
    let pts = body.sample_boundary_with(count, seed, opts)?;
    let rows: Vec<Result<(Vec<f64>, f64)>> = pts
        .par_iter()
        .map(|p| Ok((body.normal(p)?, body.level(p)?)))
        .collect();
    let mut out = String::new();
    let header: Vec<String> = (0..n)
        .map(|k| format!("x{k}"))
        .chain((0..n).map(|k| format!("n{k}")))
        .chain(std::iter::once(body.level_name().to_string()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (p, row) in pts.iter().zip(rows) {
        let (normal, level) = row?;
        let cells: Vec<String> = p
            .iter()
            .chain(&normal)
            .chain(std::iter::once(&level))
            .map(|v| v.to_string())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}
