//! The `C^{1,omega}` body `{F <= 1}` and its `C^{1,alpha}` dual-norm variant.
//!
//! Each datum contributes a convex piece `g_y` whose global minimum sits at
//! the inner point `z_y`. With `H = conv(min_y g_y)` and `A` the hull of the
//! data and the inner points, `F = H + c phi(d_A)` is convex, equals 1 with
//! gradient `N(y)` at every datum, and is minimal on `conv{z_y}`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_c11::{find_convex_root, infeasible_error};
use crate::envelope::{
    cross_validate, ConvexPiece, CrossValidation, DualPiece, Envelope, EnvelopeBackend, GridEnvelope,
    PieceFamily, TangencyPiece,
};
use crate::error::{Error, Result};
use crate::feasibility::{check_c1alpha_dual, check_c1omega, TangencyProblem};
use crate::geometry::{axpy, dot, norm2, scale, sub, NormSpace, Polytope};
use crate::modulus::{Modulus, ModulusSpec};
use crate::sampling::{point_in_box, stream_rng, unit_vector, SamplingOptions};

/// Which construction the body uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Variant {
    /// Euclidean space, general modulus `omega`.
    HilbertOmega,
    /// `l^p` space with power modulus `t^alpha`; `m` is fixed by
    /// `delta = alpha / ((1 + alpha) m^{1/alpha})`.
    DualAlpha { alpha: f64, m: f64 },
}

/// Construction parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Construction {
    Hilbert { modulus: ModulusSpec, delta: f64 },
    DualAlpha { alpha: f64, delta: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub backend: EnvelopeBackend,
    /// Number of random points at which a lattice envelope is compared with
    /// the direct solver after construction; 0 disables the comparison.
    pub cross_check_points: usize,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            backend: EnvelopeBackend::direct(),
            cross_check_points: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BodyC1Omega {
    source: TangencyProblem,
    modulus: Arc<Modulus>,
    delta: f64,
    variant: Variant,
    /// Unit vectors `N(y)`; for the dual variant these are normed by `D(y)`.
    normals: Vec<Vec<f64>>,
    minimizers: Polytope,
    inner: Polytope,
    envelope: Envelope,
    region: (Vec<f64>, Vec<f64>),
    options: BuildOptions,
    cross_check: Option<CrossValidation>,
}

/// Value of `F` with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub envelope: f64,
    pub distance: f64,
}

fn inflate(lo: &[f64], hi: &[f64], pad: f64) -> (Vec<f64>, Vec<f64>) {
    (
        lo.iter().map(|v| v - pad).collect(),
        hi.iter().map(|v| v + pad).collect(),
    )
}

impl BodyC1Omega {
    pub fn build(problem: &TangencyProblem, construction: &Construction, opts: &BuildOptions) -> Result<Self> {
        problem.validate()?;
        let (modulus, delta, variant, normals, offset) = match construction {
            Construction::Hilbert { modulus, delta } => {
                problem.require_euclidean()?;
                let modulus = Modulus::new(modulus.clone())?;
                let rep = check_c1omega(problem, &modulus, *delta)?;
                if !rep.feasible {
                    return Err(infeasible_error(&rep));
                }
                let offset = modulus.omega_inv_raw(*delta);
                let normals = problem.data.iter().map(|d| d.normal.clone()).collect();
                (modulus, *delta, Variant::HilbertOmega, normals, offset)
            }
            Construction::DualAlpha { alpha, delta } => {
                let p = problem.space.exponent();
                if !(*alpha > 0.0 && *alpha <= 1.0 && *alpha <= p - 1.0 + 1e-12) {
                    return Err(Error::Domain(format!(
                        "alpha = {alpha} must lie in (0, min(1, p - 1)] with p = {p}"
                    )));
                }
                let rep = check_c1alpha_dual(problem, *alpha, *delta)?;
                if !rep.feasible {
                    return Err(infeasible_error(&rep));
                }
                let m = (alpha / ((1.0 + alpha) * delta)).powf(*alpha);
                let normals = problem
                    .data
                    .iter()
                    .map(|d| problem.space.normed_vector(&crate::geometry::DualFunctional(d.normal.clone())))
                    .collect::<Result<Vec<_>>>()?;
                let modulus = Modulus::power(1.0, *alpha)?;
                (
                    modulus,
                    *delta,
                    Variant::DualAlpha { alpha: *alpha, m },
                    normals,
                    m.powf(-1.0 / alpha),
                )
            }
        };
        let modulus = Arc::new(modulus);
        let zs: Vec<Vec<f64>> = problem
            .data
            .iter()
            .zip(&normals)
            .map(|(d, n)| axpy(&d.point, -offset, n))
            .collect();
        let mut hull = problem.points();
        hull.extend(zs.iter().cloned());
        let inner = Polytope::new(hull)?;
        let minimizers = Polytope::new(zs)?;

        let pieces: Vec<Box<dyn ConvexPiece>> = problem
            .data
            .iter()
            .map(|d| -> Box<dyn ConvexPiece> {
                match &variant {
                    Variant::HilbertOmega => Box::new(TangencyPiece {
                        point: d.point.clone(),
                        normal: d.normal.clone(),
                        delta,
                        modulus: modulus.clone(),
                    }),
                    Variant::DualAlpha { alpha, m } => Box::new(DualPiece {
                        point: d.point.clone(),
                        functional: d.normal.clone(),
                        p: problem.space.exponent(),
                        alpha: *alpha,
                        m: *m,
                    }),
                }
            })
            .collect();
        let family = Arc::new(PieceFamily::new(pieces)?);

        let (blo, bhi) = inner.bounding_box();
        let reach = level_radius(&variant, &modulus, delta) + offset;
        let region = inflate(&blo, &bhi, 1.1 * reach);
        let grid_box = inflate(&blo, &bhi, 2.0 * reach);
        let envelope = Envelope::new(family.clone(), opts.backend.clone(), Some(grid_box.clone()))?;

        let mut cross_check = None;
        if opts.cross_check_points > 0 {
            let mut rng = stream_rng(opts.seed, 0xc0c0);
            let pts: Vec<Vec<f64>> = (0..opts.cross_check_points)
                .map(|_| point_in_box(&mut rng, &region.0, &region.1))
                .collect();
            let grid = match envelope.grid() {
                Some(g) => g.clone(),
                None => {
                    let fam = family.clone();
                    let res = crate::envelope::default_grid_resolution(problem.dimension());
                    GridEnvelope::build(move |x| fam.min_value(x).0, grid_box.0, grid_box.1, res)?
                }
            };
            cross_check = Some(cross_validate(&family, &grid, &pts)?);
        }

        Ok(BodyC1Omega {
            source: problem.clone(),
            modulus,
            delta,
            variant,
            normals,
            minimizers,
            inner,
            envelope,
            region,
            options: opts.clone(),
            cross_check,
        })
    }

    pub fn source(&self) -> &TangencyProblem {
        &self.source
    }

    /// Parameters that rebuild this body.
    pub fn construction(&self) -> Construction {
        match self.variant {
            Variant::HilbertOmega => Construction::Hilbert {
                modulus: self.modulus.spec().clone(),
                delta: self.delta,
            },
            Variant::DualAlpha { alpha, .. } => Construction::DualAlpha {
                alpha,
                delta: self.delta,
            },
        }
    }

    pub fn build_options(&self) -> &BuildOptions {
        &self.options
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn backend(&self) -> &EnvelopeBackend {
        self.envelope.backend()
    }

    pub fn space(&self) -> &NormSpace {
        &self.source.space
    }

    pub fn dimension(&self) -> usize {
        self.source.dimension()
    }

    /// Unit vectors `N(y)` at the data.
    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// The points `z_y` where `F` is minimal.
    pub fn minimizers(&self) -> &Polytope {
        &self.minimizers
    }

    /// The set `A`.
    pub fn inner_hull(&self) -> &Polytope {
        &self.inner
    }

    pub fn validated_region(&self) -> (&[f64], &[f64]) {
        (&self.region.0, &self.region.1)
    }

    pub fn cross_check(&self) -> Option<&CrossValidation> {
        self.cross_check.as_ref()
    }

    /// Coefficient of the distance term and `1 - inf F`.
    pub fn depth(&self) -> f64 {
        match self.variant {
            Variant::HilbertOmega => self.modulus.phi_star_raw(self.delta) / self.delta,
            Variant::DualAlpha { .. } => self.delta,
        }
    }

    /// `inf F`.
    pub fn minimum_value(&self) -> f64 {
        1.0 - self.depth()
    }

    /// Distance from `z_y` to `y`.
    pub fn inner_offset(&self) -> f64 {
        match self.variant {
            Variant::HilbertOmega => self.modulus.omega_inv_raw(self.delta),
            Variant::DualAlpha { alpha, m } => m.powf(-1.0 / alpha),
        }
    }

    /// Bound on `d_A` over the sublevel set `{F <= 1}`.
    pub fn level_radius(&self) -> f64 {
        level_radius(&self.variant, &self.modulus, self.delta)
    }

    /// Lower bound for `||grad F||_*` on `{F = 1}`.
    pub fn gradient_lower_bound(&self) -> f64 {
        self.depth() / (self.level_radius() + self.inner_offset())
    }

    fn check_region(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::Input(format!(
                "query has dimension {}, expected {}",
                x.len(),
                self.dimension()
            )));
        }
        let slack = 1e-9;
        let inside = x
            .iter()
            .zip(self.region.0.iter().zip(&self.region.1))
            .all(|(v, (a, b))| *v >= *a - slack && *v <= *b + slack);
        if inside {
            Ok(())
        } else {
            Err(Error::Region("query lies outside the validated region".into()))
        }
    }

    /// `g(x) = min_y g_y(x)`.
    pub fn eval_g(&self, x: &[f64]) -> f64 {
        self.envelope.family().min_value(x).0
    }

    /// `H(x)` and `grad H(x)`.
    pub fn eval_h(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_region(x)?;
        self.envelope.value_and_gradient(x)
    }

    fn distance_term(&self, x: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let pr = self.space().project(x, &self.inner)?;
        let d = pr.distance;
        let n = x.len();
        if d <= 0.0 {
            return Ok((0.0, 0.0, vec![0.0; n]));
        }
        let dir = sub(x, &pr.point);
        match self.variant {
            Variant::HilbertOmega => {
                let c = self.depth();
                let w = c * self.modulus.omega_raw(d) / d;
                Ok((d, c * self.modulus.phi_raw(d), scale(&dir, w)))
            }
            Variant::DualAlpha { alpha, .. } => {
                let j = self.space().duality_map(&dir)?.0;
                Ok((d, d.powf(1.0 + alpha), scale(&j, (1.0 + alpha) * d.powf(alpha))))
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let (h, gh) = self.eval_h(x)?;
        let (d, term, gd) = self.distance_term(x)?;
        Ok(Evaluation {
            value: h + term,
            gradient: gh.iter().zip(&gd).map(|(a, b)| a + b).collect(),
            envelope: h,
            distance: d,
        })
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.value)
    }

    pub fn grad_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x)?.gradient)
    }

    /// Outer unit normal `grad F / ||grad F||` at `x`.
    pub fn normal_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.grad_f(x)?;
        let len = norm2(&g);
        if !(len > 0.0) {
            return Err(Error::Region("gradient vanishes; no normal is defined".into()));
        }
        match self.variant {
            Variant::HilbertOmega => Ok(scale(&g, 1.0 / len)),
            Variant::DualAlpha { .. } => {
                let dn = self.space().dual_norm(&g);
                self.space()
                    .normed_vector(&crate::geometry::DualFunctional(scale(&g, 1.0 / dn)))
            }
        }
    }

    /// Centroid of the minimizers, where `F` attains its minimum.
    pub fn interior_point(&self) -> Vec<f64> {
        self.minimizers.centroid()
    }

    fn box_exit(&self, origin: &[f64], dir: &[f64]) -> f64 {
        let mut t = f64::INFINITY;
        for k in 0..dir.len() {
            if dir[k] > 0.0 {
                t = t.min((self.region.1[k] - origin[k]) / dir[k]);
            } else if dir[k] < 0.0 {
                t = t.min((self.region.0[k] - origin[k]) / dir[k]);
            }
        }
        t
    }

    /// Parameter `t` with `F(origin + t dir) = 1`.
    pub fn ray_exit(&self, origin: &[f64], dir: &[f64]) -> Result<f64> {
        let f0 = self.eval_f(origin)?;
        if f0 >= 1.0 {
            return Err(Error::Input("ray origin must satisfy F < 1".into()));
        }
        let hi = self.box_exit(origin, dir);
        if !hi.is_finite() || hi <= 0.0 {
            return Err(Error::Region("ray does not cross the validated region".into()));
        }
        let along = |t: f64| -> Result<(f64, f64)> {
            let e = self.evaluate(&axpy(origin, t.clamp(0.0, hi), dir))?;
            Ok((e.value - 1.0, dot(&e.gradient, dir)))
        };
        let t = find_convex_root(along, hi, 1e-11)?;
        Ok(t)
    }

    pub fn sample_boundary(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.sample_boundary_with(count, seed, &SamplingOptions::default())
    }

    /// Ray-cast samples of `{F = 1}`. Directions come from a seeded stream,
    /// so a larger count extends a smaller one.
    pub fn sample_boundary_with(&self, count: usize, seed: u64, opts: &SamplingOptions) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Err(Error::Input("sample count must be >= 1".into()));
        }
        let origin = opts.interior.clone().unwrap_or_else(|| self.interior_point());
        let n = self.dimension();
        let mut rng = stream_rng(seed, 0x5a3e);
        let mut out = Vec::with_capacity(count);
        let mut drawn = 0usize;
        while out.len() < count {
            if drawn > 100 * count + 100 {
                return Err(Error::Region("clip box rejects almost every boundary sample".into()));
            }
            let need = count - out.len();
            let dirs: Vec<Vec<f64>> = (0..need).map(|_| unit_vector(&mut rng, n)).collect();
            drawn += need;
            let pts: Vec<Result<Vec<f64>>> = dirs
                .par_iter()
                .map(|u| Ok(axpy(&origin, self.ray_exit(&origin, u)?, u)))
                .collect();
            for p in pts {
                let p = p?;
                if opts.clip.as_ref().is_none_or(|c| c.contains(&p)) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    /// Checks the gradient bounds on `{F = 1}` at `samples` ray-cast points.
    pub fn level_set_bounds_check(&self, samples: usize, seed: u64) -> Result<LevelSetReport> {
        let pts = self.sample_boundary(samples, seed)?;
        let zs = &self.minimizers;
        let lower_bound = self.gradient_lower_bound();
        let rows: Vec<Result<(f64, f64, f64)>> = pts
            .par_iter()
            .map(|x| {
                let e = self.evaluate(x)?;
                let g = self.space().dual_norm(&e.gradient);
                let z = self.space().project(x, zs)?;
                Ok((e.value, g, z.distance))
            })
            .collect();
        let mut min_gradient = f64::INFINITY;
        let mut max_gradient: f64 = 0.0;
        let mut fitted = 0.0f64;
        let mut max_level_error: f64 = 0.0;
        let mut witness = None;
        for (x, row) in pts.iter().zip(rows) {
            let (v, g, dz) = row?;
            max_level_error = max_level_error.max((v - 1.0).abs());
            if g < min_gradient {
                min_gradient = g;
                if g < lower_bound && witness.is_none() {
                    witness = Some(x.clone());
                }
            }
            max_gradient = max_gradient.max(g);
            if dz > 0.0 {
                fitted = fitted.max(g / self.modulus.omega_raw(dz));
            }
        }
        let reach = self.level_radius() + self.inner_offset();
        let upper_bound = fitted * self.modulus.omega_raw(reach);
        Ok(LevelSetReport {
            samples,
            lower_bound,
            upper_bound,
            fitted_l: fitted,
            min_gradient,
            max_gradient,
            max_level_error,
            lower_holds: witness.is_none() && max_level_error <= 1e-6,
            upper_holds: max_gradient <= upper_bound * (1.0 + 1e-12),
            witness,
        })
    }
}

fn level_radius(variant: &Variant, modulus: &Modulus, delta: f64) -> f64 {
    match variant {
        Variant::HilbertOmega => modulus.phi_inv_raw(1.0),
        Variant::DualAlpha { alpha, .. } => delta.powf(1.0 / (1.0 + alpha)),
    }
}

/// Gradient norms on sampled level-set points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub samples: usize,
    pub lower_bound: f64,
    /// `L omega(level radius + inner offset)` with the fitted `L`.
    pub upper_bound: f64,
    /// Largest `||grad F(x)|| / omega(|x - P_Z x|)`, with `Z = conv{z_y}`
    /// where the gradient vanishes.
    pub fitted_l: f64,
    pub min_gradient: f64,
    pub max_gradient: f64,
    pub max_level_error: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub witness: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize) -> TangencyProblem {
        let data = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                (vec![a.cos(), a.sin()], vec![a.cos(), a.sin()])
            })
            .collect();
        TangencyProblem::euclidean(data).unwrap()
    }

    fn linear(delta: f64) -> Construction {
        Construction::Hilbert {
            modulus: ModulusSpec::Power { k: 1.0, alpha: 1.0 },
            delta,
        }
    }

    #[test]
    fn single_datum_minimum() {
        let p = TangencyProblem::euclidean(vec![(vec![0.0, 0.0], vec![0.0, 1.0])]).unwrap();
        let b = BodyC1Omega::build(&p, &linear(0.5), &BuildOptions::default()).unwrap();
        // omega(t) = t: phi^*(s) = s^2/2, so inf F = 1 - 0.25.
        assert!((b.minimum_value() - 0.75).abs() < 1e-15);
        let z = &b.minimizers().vertices[0];
        assert!((z[1] + 0.5).abs() < 1e-15);
        assert!((b.eval_g(z) - 0.75).abs() < 1e-15);
        assert!((b.eval_f(z).unwrap() - 0.75).abs() < 1e-12);
        assert!(norm2(&b.grad_f(z).unwrap()) < 1e-12);
    }

    #[test]
    fn circle_interpolates() {
        let p = circle(8);
        let b = BodyC1Omega::build(&p, &linear(0.5), &BuildOptions::default()).unwrap();
        for d in &p.data {
            let e = b.evaluate(&d.point).unwrap();
            assert!((e.value - 1.0).abs() < 1e-12);
            let diff = sub(&e.gradient, &d.normal);
            assert!(norm2(&diff) < 1e-9);
        }
        let c = b.interior_point();
        assert!((b.eval_f(&c).unwrap() - b.minimum_value()).abs() < 1e-9);
    }

    #[test]
    fn region_is_enforced() {
        let p = circle(4);
        let b = BodyC1Omega::build(&p, &linear(0.5), &BuildOptions::default()).unwrap();
        assert!(matches!(b.eval_f(&[100.0, 0.0]), Err(Error::Region(_))));
    }

    #[test]
    fn infeasible_delta_is_refused() {
        let p = circle(8);
        let e = BodyC1Omega::build(&p, &linear(50.0), &BuildOptions::default());
        assert!(matches!(e, Err(Error::Infeasible { .. })));
    }
}
