//! The `C^{1,1}` body rolled by balls of radius `r`.
//!
//! For feasible data at radius `r` the body is the convex hull of the balls
//! `B(y - r N(y), r)`, which equals `conv{z_y} + B(0, r)`. With that
//! representation the signed distance outside the center hull is
//! `dist(x, conv{z_y}) - r`, so every query is a polytope projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{check_c11, Diagnostic, TangencyProblem};
use crate::geometry::{axpy, dist2, dot, norm2, scale, sub, NormSpace, Polytope, Projection};
use crate::sampling::{stream_rng, unit_vector, SamplingOptions};

/// Boundary tolerance for normal queries.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyC11 {
    pub centers: Polytope,
    pub radius: f64,
    pub source: TangencyProblem,
}

/// Converts a failed feasibility report into the matching error.
pub(crate) fn infeasible_error(rep: &crate::feasibility::FeasibilityReport) -> Error {
    let (first, second) = rep.violating_pair.unwrap_or((0, 0));
    match rep.diagnostic {
        Some(Diagnostic::DuplicatePoint) => Error::DuplicatePoint { first, second },
        _ => Error::Infeasible {
            first,
            second,
            violation: -rep.worst_margin,
        },
    }
}

impl BodyC11 {
    /// Builds the body at radius `r`, refusing infeasible data.
    pub fn build(problem: &TangencyProblem, r: f64) -> Result<Self> {
        let rep = check_c11(problem, r)?;
        if !rep.feasible {
            return Err(infeasible_error(&rep));
        }
        let centers = problem
            .data
            .iter()
            .map(|d| axpy(&d.point, -r, &d.normal))
            .collect();
        Ok(BodyC11 {
            centers: Polytope::new(centers)?,
            radius: r,
            source: problem.clone(),
        })
    }

    /// Reassembles a body from stored parts without re-running feasibility.
    pub fn from_parts(centers: Vec<Vec<f64>>, radius: f64, source: TangencyProblem) -> Result<Self> {
        source.validate()?;
        if !source.space.is_euclidean() {
            return Err(Error::Input("C^{1,1} bodies live in a Euclidean space".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Input(format!("radius must be positive, got {radius}")));
        }
        let centers = Polytope::new(centers)?;
        if centers.dimension() != source.dimension() {
            return Err(Error::Input("center dimension differs from data dimension".into()));
        }
        if centers.len() != source.len() {
            return Err(Error::Input(format!(
                "expected {} centers, found {}",
                source.len(),
                centers.len()
            )));
        }
        Ok(BodyC11 {
            centers,
            radius,
            source,
        })
    }

    pub fn dimension(&self) -> usize {
        self.centers.dimension()
    }

    fn space(&self) -> NormSpace {
        NormSpace::euclidean(self.dimension())
    }

    pub fn project_centers(&self, x: &[f64]) -> Result<Projection> {
        self.space().project(x, &self.centers)
    }

    /// Signed distance to the boundary, exact wherever `b_V > -r`. Inside the
    /// center hull the value saturates at `-r`.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.project_centers(x)?.distance - self.radius)
    }

    /// Gradient of the signed distance, `N_S(P_S(x))`, for `x` off the center hull.
    pub fn signed_distance_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pr = self.project_centers(x)?;
        if pr.distance <= BOUNDARY_TOLERANCE {
            return Err(Error::Region(
                "point lies in the center hull; the signed distance is not differentiable there".into(),
            ));
        }
        Ok(scale(&sub(x, &pr.point), 1.0 / pr.distance))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(self.signed_distance(x)? <= tol)
    }

    /// Nearest boundary point `P_S(x)` for `b_V(x) > -r`.
    pub fn project_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pr = self.project_centers(x)?;
        if pr.distance <= BOUNDARY_TOLERANCE {
            return Err(Error::Region(format!(
                "b_V(x) = {} is too deep for a unique nearest boundary point",
                pr.distance - self.radius
            )));
        }
        Ok(axpy(&pr.point, self.radius / pr.distance, &sub(x, &pr.point)))
    }

    /// Outer unit normal at a boundary point.
    pub fn boundary_normal(&self, s: &[f64]) -> Result<Vec<f64>> {
        let pr = self.project_centers(s)?;
        let b = pr.distance - self.radius;
        if b.abs() > BOUNDARY_TOLERANCE {
            return Err(Error::Region(format!("point is not on the boundary (b_V = {b:e})")));
        }
        if pr.distance <= BOUNDARY_TOLERANCE {
            return Err(Error::Region("boundary point touches the center hull".into()));
        }
        Ok(scale(&sub(s, &pr.point), 1.0 / pr.distance))
    }

    /// A point with `b_V <= -r`.
    pub fn interior_point(&self) -> Vec<f64> {
        self.centers.centroid()
    }

    fn exit_bracket(&self, origin: &[f64], dir: &[f64]) -> f64 {
        let reach = self
            .centers
            .vertices
            .iter()
            .map(|c| dist2(c, origin))
            .fold(0.0, f64::max);
        (reach + self.radius) * (1.0 + 1e-9) / norm2(dir) + 1e-12
    }

    /// Parameter `t > 0` with `origin + t dir` on the boundary, for an
    /// interior `origin`. The signed distance is convex along the ray, so
    /// Newton iterates started outside decrease monotonically to the root;
    /// a bisection bracket guards every step.
    pub fn ray_exit(&self, origin: &[f64], dir: &[f64]) -> Result<f64> {
        let along = |t: f64| -> Result<(f64, f64)> {
            let x = axpy(origin, t, dir);
            let pr = self.project_centers(&x)?;
            let slope = if pr.distance > 0.0 {
                dot(&sub(&x, &pr.point), dir) / pr.distance
            } else {
                0.0
            };
            Ok((pr.distance - self.radius, slope))
        };
        let (b0, _) = along(0.0)?;
        if b0 >= 0.0 {
            return Err(Error::Input("ray origin must be interior".into()));
        }
        find_convex_root(along, self.exit_bracket(origin, dir), 1e-13 * (1.0 + self.radius))
    }

    /// Minkowski gauge of the body translated so that `origin` becomes 0.
    pub fn gauge(&self, x: &[f64], origin: &[f64]) -> Result<f64> {
        if self.signed_distance(origin)? >= -1e-6 {
            return Err(Error::Input("gauge origin must be strictly interior".into()));
        }
        let dir = sub(x, origin);
        if norm2(&dir) == 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 / self.ray_exit(origin, &dir)?)
    }

    /// `grad mu(x) = N_S(p) / <N_S(p), p - origin>` with `p` the boundary point on the ray.
    pub fn gauge_gradient(&self, x: &[f64], origin: &[f64]) -> Result<Vec<f64>> {
        let mu = self.gauge(x, origin)?;
        if mu == 0.0 {
            return Err(Error::Domain("gauge gradient undefined at the origin".into()));
        }
        let p = axpy(origin, 1.0 / mu, &sub(x, origin));
        let pr = self.project_centers(&p)?;
        let normal = scale(&sub(&p, &pr.point), 1.0 / pr.distance);
        let denom = dot(&normal, &sub(&p, origin));
        Ok(scale(&normal, 1.0 / denom))
    }

    pub fn sample_boundary(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.sample_boundary_with(count, seed, &SamplingOptions::default())
    }

    /// Ray-cast boundary samples from an interior point along seeded
    /// directions. Sample `k` depends only on `(seed, k)`, so a larger
    /// count extends a smaller one.
    pub fn sample_boundary_with(
        &self,
        count: usize,
        seed: u64,
        opts: &SamplingOptions,
    ) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Err(Error::Input("sample count must be >= 1".into()));
        }
        let origin = opts.interior.clone().unwrap_or_else(|| self.interior_point());
        let n = self.dimension();
        let mut rng = stream_rng(seed, 0x5a3e);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > 100 * count + 100 {
                return Err(Error::Region("clip box rejects almost every boundary sample".into()));
            }
            let u = unit_vector(&mut rng, n);
            let t = self.ray_exit(&origin, &u)?;
            let s = axpy(&origin, t, &u);
            if opts.clip.as_ref().is_none_or(|c| c.contains(&s)) {
                out.push(s);
            }
        }
        Ok(out)
    }
}

/// Root of a convex function `f` on `(0, hi]` with `f(0) < 0 <= f(hi)`.
/// `f` returns the value and the derivative.
pub(crate) fn find_convex_root<F>(mut f: F, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut lo = 0.0;
    let mut hi = hi;
    let mut t = hi;
    for iter in 0..300 {
        let (v, d) = f(t)?;
        if iter == 0 && v < 0.0 {
            return Err(Error::Region("ray does not leave the body inside the search range".into()));
        }
        if v.abs() <= tol || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            return Ok(t);
        }
        if v < 0.0 {
            lo = t;
            t = 0.5 * (lo + hi);
            continue;
        }
        hi = t;
        let newton = if d > 0.0 { t - v / d } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball() -> BodyC11 {
        let p = TangencyProblem::euclidean(vec![(vec![0.0, 1.0], vec![0.0, 1.0])]).unwrap();
        BodyC11::from_parts(vec![vec![0.0, 0.0]], 1.0, p).unwrap()
    }

    fn stadium() -> BodyC11 {
        let p = TangencyProblem::euclidean(vec![
            (vec![0.0, 1.0], vec![0.0, 1.0]),
            (vec![2.0, 1.0], vec![0.0, 1.0]),
        ])
        .unwrap();
        BodyC11::build(&p, 1.0).unwrap()
    }

    #[test]
    fn single_datum_is_one_ball() {
        let p = TangencyProblem::euclidean(vec![(vec![0.0, 0.0], vec![0.0, 1.0])]).unwrap();
        let b = BodyC11::build(&p, 1.0).unwrap();
        assert_eq!(b.centers.vertices, vec![vec![0.0, -1.0]]);
        assert!((b.signed_distance(&[0.0, -1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn stadium_queries() {
        let b = stadium();
        assert_eq!(b.centers.vertices, vec![vec![0.0, 0.0], vec![2.0, 0.0]]);
        assert!((b.signed_distance(&[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-14);
        let p = b.project_boundary(&[1.0, 0.5]).unwrap();
        assert!(dist2(&p, &[1.0, 1.0]) < 1e-14);
        let s = [2.6, 0.8];
        let n = b.boundary_normal(&s).unwrap();
        let expect = scale(&[0.6, 0.8], 1.0);
        assert!(dist2(&n, &expect) < 1e-12);
    }

    #[test]
    fn unit_ball_queries() {
        let b = unit_ball();
        assert!((b.signed_distance(&[0.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((b.signed_distance(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(dist2(&b.project_boundary(&[0.0, 2.0]).unwrap(), &[0.0, 1.0]) < 1e-15);
        assert!(dist2(&b.boundary_normal(&[0.0, 1.0]).unwrap(), &[0.0, 1.0]) < 1e-15);
        let mu = b.gauge(&[0.3, -0.4], &[0.0, 0.0]).unwrap();
        assert!((mu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deep_points_have_no_unique_projection() {
        let b = unit_ball();
        assert!(matches!(b.project_boundary(&[0.0, 0.0]), Err(Error::Region(_))));
        assert!(matches!(b.boundary_normal(&[0.0, 0.5]), Err(Error::Region(_))));
    }

    #[test]
    fn gauge_rejects_boundary_origin() {
        let b = stadium();
        assert!(matches!(b.gauge(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn samples_are_on_the_boundary_and_reproducible() {
        let b = stadium();
        let s1 = b.sample_boundary(50, 7).unwrap();
        let s2 = b.sample_boundary(80, 7).unwrap();
        assert_eq!(&s1[..], &s2[..50]);
        for s in &s1 {
            assert!(b.signed_distance(s).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn infeasible_radius_is_refused() {
        let p = TangencyProblem::euclidean(vec![
            (vec![0.0, 1.0], vec![0.0, 1.0]),
            (vec![0.0, -1.0], vec![0.0, -1.0]),
        ])
        .unwrap();
        assert!(BodyC11::build(&p, 1.0).is_ok());
        assert!(matches!(BodyC11::build(&p, 1.5), Err(Error::Infeasible { .. })));
    }
}
