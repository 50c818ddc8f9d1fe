//! Seeded random streams shared by the samplers and the verifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::norm2;

/// Deterministic generator for `(seed, stream)`. Distinct streams are
/// independent, so per-sample draws do not depend on evaluation order.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniformly distributed unit vector.
pub fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = norm2(&v);
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Uniform point of the axis-aligned box `[lo, hi]`.
pub fn point_in_box<R: Rng>(rng: &mut R, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
        .collect()
}

/// Uniform point of a ball.
pub fn point_in_ball<R: Rng>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    let u = unit_vector(rng, n);
    let rho = radius * rng.random::<f64>().powf(1.0 / n as f64);
    center.iter().zip(&u).map(|(c, d)| c + rho * d).collect()
}

/// Axis-aligned clip box for sampling unbounded bodies.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClipBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ClipBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Options for ray-cast boundary sampling.
#[derive(Clone, Debug, Default)]
pub struct SamplingOptions {
    /// Ray origin; defaults to an interior point chosen by the body.
    pub interior: Option<Vec<f64>>,
    pub clip: Option<ClipBox>,
}
