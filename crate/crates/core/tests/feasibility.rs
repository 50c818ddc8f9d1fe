//! Pairwise feasibility scans against exhaustive oracles.

use convext::feasibility::{
    check_c11, check_c1alpha_dual, check_c1omega, max_c11_radius, max_c1alpha_delta, max_c1omega_delta,
};
use convext::fixtures::{gen_cusp_curve_data, gen_random_convex_data, gen_sphere_data, RandomBody};
use convext::geometry::{dot, norm2, sub};
use convext::sampling::{stream_rng, unit_vector};
use convext::{Datum, Modulus, NormSpace, TangencyProblem};
use proptest::prelude::*;
use rand::Rng;

/// Independent double loop over ordered pairs for `inf 2<N(y),y-x>/|N(y)-N(x)|^2`.
fn oracle_radius(p: &TangencyProblem) -> f64 {
    let mut best = f64::INFINITY;
    for (i, x) in p.data.iter().enumerate() {
        for (j, y) in p.data.iter().enumerate() {
            if i == j {
                continue;
            }
            let a = dot(&y.normal, &sub(&y.point, &x.point));
            let b = norm2(&sub(&y.normal, &x.normal));
            if b == 0.0 {
                if a < 0.0 {
                    best = 0.0;
                }
                continue;
            }
            best = best.min(if a <= 0.0 { 0.0 } else { 2.0 * a / (b * b) });
        }
    }
    best
}

/// Same for `inf (D(y)(y-x) / |D(x)-D(y)|_*^{1+1/alpha})`.
fn oracle_dual_delta(p: &TangencyProblem, alpha: f64) -> f64 {
    let mut best = f64::INFINITY;
    for (i, x) in p.data.iter().enumerate() {
        for (j, y) in p.data.iter().enumerate() {
            if i != j {
                let a = dot(&y.normal, &sub(&y.point, &x.point));
                let b = p.space.dual_norm(&sub(&x.normal, &y.normal));
                if b > 0.0 {
                    best = best.min(a.max(0.0) / b.powf(1.0 + 1.0 / alpha));
                }
            }
        }
    }
    best
}

fn euclidean(data: Vec<(Vec<f64>, Vec<f64>)>) -> TangencyProblem {
    TangencyProblem::euclidean(data).unwrap()
}

#[test]
fn circle_is_feasible_at_unit_radius() {
    for n in [3, 8, 31] {
        let p = gen_sphere_data(n, 2, 1.0).unwrap();
        let rep = check_c11(&p, 1.0).unwrap();
        assert!(rep.feasible);
        assert!(rep.worst_margin.abs() < 1e-12);
        assert!(rep.violating_pair.is_none());
        assert!(!check_c11(&p, 1.0 + 1e-6).unwrap().feasible);
    }
}

#[test]
fn opposing_normals_are_infeasible_at_every_radius() {
    let p = euclidean(vec![(vec![0.0, 0.0], vec![0.0, 1.0]), (vec![1.0, 0.0], vec![0.0, -1.0])]);
    for r in [1e-6, 1e-3, 1.0, 10.0] {
        let rep = check_c11(&p, r).unwrap();
        assert!(!rep.feasible);
        assert!(rep.violating_pair.is_some());
    }
    assert_eq!(max_c11_radius(&p).unwrap(), 0.0);
    let m = Modulus::power(1.0, 0.5).unwrap();
    assert!(!check_c1omega(&p, &m, 1e-6).unwrap().feasible);
}

#[test]
fn antipodal_pair_and_single_datum() {
    let p = euclidean(vec![(vec![0.0, 1.0], vec![0.0, 1.0]), (vec![0.0, -1.0], vec![0.0, -1.0])]);
    assert!((max_c11_radius(&p).unwrap() - 1.0).abs() < 1e-15);
    let one = euclidean(vec![(vec![0.3, 0.1], vec![1.0, 0.0])]);
    assert_eq!(max_c11_radius(&one).unwrap(), f64::INFINITY);
    assert!(check_c1alpha_dual(&one, 0.5, 1e6).unwrap().feasible);
}

#[test]
fn duplicate_points_with_distinct_normals() {
    let p = euclidean(vec![(vec![0.0, 0.0], vec![0.0, 1.0]), (vec![0.0, 0.0], vec![1.0, 0.0])]);
    let rep = check_c11(&p, 0.1).unwrap();
    assert!(!rep.feasible);
    assert_eq!(rep.violating_pair, Some((0, 1)));
}

#[test]
fn non_unit_normals_are_rejected() {
    let space = NormSpace::euclidean(2);
    let data = vec![Datum {
        point: vec![0.0, 0.0],
        normal: vec![0.0, 1.1],
    }];
    assert!(TangencyProblem::new(space, data).is_err());
}

#[test]
fn ellipse_radius_matches_exhaustive_scan() {
    let body = RandomBody::Ellipse { a: 2.0, b: 1.0 };
    for seed in 0..5 {
        let p = gen_random_convex_data(&body, 40, 0.0, seed).unwrap();
        let r = max_c11_radius(&p).unwrap();
        assert!((r - oracle_radius(&p)).abs() <= 1e-12 * (1.0 + r));
        // Pairwise ratios stay at or above the smallest curvature radius b^2/a.
        assert!(r >= 0.5 - 1e-9, "r = {r}");
    }
    // Refinement drives the sharp radius to b^2/a.
    let dense = gen_random_convex_data(&body, 2000, 0.0, 1).unwrap();
    assert!((max_c11_radius(&dense).unwrap() - 0.5).abs() < 1e-2);
}

#[test]
fn large_noise_is_infeasible() {
    let body = RandomBody::Ellipse { a: 2.0, b: 1.0 };
    let p = gen_random_convex_data(&body, 40, 1.0, 3).unwrap();
    let rep = check_c11(&p, 0.05).unwrap();
    assert!(!rep.feasible);
    let (i, j) = rep.violating_pair.unwrap();
    assert!(i < p.len() && j < p.len() && i != j);
}

#[test]
fn linear_modulus_reduces_to_c11() {
    let body = RandomBody::Ellipse { a: 1.5, b: 1.0 };
    let mut rng = stream_rng(5, 5);
    for seed in 0..10 {
        let p = gen_random_convex_data(&body, 15, 0.02, seed).unwrap();
        let k = rng.random_range(0.5..3.0);
        let m = Modulus::power(k, 1.0).unwrap();
        let r = max_c11_radius(&p).unwrap();
        let d = max_c1omega_delta(&p, &m).unwrap();
        assert!((r - 2.0 * d / k).abs() <= 1e-12 * (1.0 + r), "{r} vs {}", 2.0 * d / k);
        if d == 0.0 {
            continue;
        }
        for delta in [0.25 * d, 0.9 * d, 1.1 * d, 2.0 * d] {
            assert_eq!(
                check_c1omega(&p, &m, delta).unwrap().feasible,
                check_c11(&p, 2.0 * delta / k).unwrap().feasible
            );
        }
    }
}

#[test]
fn euclidean_dual_alpha_one_is_c11() {
    let body = RandomBody::Ellipsoid { a: 1.0, b: 2.0, c: 1.5 };
    for seed in 0..5 {
        let p = gen_random_convex_data(&body, 20, 0.0, seed).unwrap();
        let d = max_c1alpha_delta(&p, 1.0).unwrap();
        assert!((max_c11_radius(&p).unwrap() - 2.0 * d).abs() < 1e-12);
        assert_eq!(check_c1alpha_dual(&p, 1.0, 0.9 * d).unwrap().feasible, check_c11(&p, 1.8 * d).unwrap().feasible);
    }
}

#[test]
fn lp_sphere_delta_matches_exhaustive_scan() {
    let p = 1.5;
    let space = NormSpace::lp(2, p).unwrap();
    let mut data = Vec::new();
    for i in 0..24 {
        let a = std::f64::consts::TAU * i as f64 / 24.0;
        let u = [a.cos(), a.sin()];
        let len = space.norm(&u);
        let x = vec![u[0] / len, u[1] / len];
        let xi = space.duality_map(&x).unwrap();
        data.push(Datum { point: x, normal: xi.0 });
    }
    let problem = TangencyProblem::new(space, data).unwrap();
    for alpha in [0.25, 0.5] {
        let d = max_c1alpha_delta(&problem, alpha).unwrap();
        let oracle = oracle_dual_delta(&problem, alpha);
        assert!((d - oracle).abs() <= 1e-10 * (1.0 + oracle), "{d} vs {oracle}");
        assert!(d > 0.0);
    }
}

#[test]
fn cusp_radius_vanishes_while_half_holder_delta_stays() {
    let m = Modulus::power(1.0, 0.5).unwrap();
    let mut last_r = f64::INFINITY;
    let mut deltas = Vec::new();
    for h in [1e-1, 1e-2, 1e-3, 1e-4] {
        let p = gen_cusp_curve_data(h, 1.0, 8).unwrap();
        let r = max_c11_radius(&p).unwrap();
        assert!(r < last_r);
        last_r = r;
        // The symmetric pair t = +-h alone gives 2<N(y),y-x>/|dN|^2 = (2/3) h^{1/2} sqrt(1 + 9h/4).
        let pair = 2.0 / 3.0 * h.sqrt() * (1.0 + 2.25 * h).sqrt();
        assert!(r <= pair * (1.0 + 1e-9));
        deltas.push(max_c1omega_delta(&p, &m).unwrap());
    }
    assert!(last_r < 1e-2);
    let lowest = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lowest > 0.1, "{deltas:?}");
}

fn ellipse_problem() -> impl Strategy<Value = TangencyProblem> {
    (1.0f64..3.0, 0.5f64..1.0, 3usize..20, any::<u64>()).prop_map(|(a, b, n, seed)| {
        gen_random_convex_data(&RandomBody::Ellipse { a, b }, n, 0.0, seed).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radius_monotonicity(p in ellipse_problem(), f in 0.01f64..1.0) {
        let r = max_c11_radius(&p).unwrap();
        prop_assume!(r.is_finite());
        prop_assert!(check_c11(&p, r * f).unwrap().feasible);
        prop_assert!(check_c11(&p, r).unwrap().feasible);
        prop_assert!(!check_c11(&p, r * (1.0 + 1e-6) + 1e-12).unwrap().feasible);
    }

    #[test]
    fn symmetrized_necessity(p in ellipse_problem(), f in 0.1f64..1.0) {
        let r = f * max_c11_radius(&p).unwrap();
        prop_assume!(r.is_finite());
        for x in &p.data {
            for y in &p.data {
                let dn = norm2(&sub(&x.normal, &y.normal));
                prop_assert!(dn <= 2.0 / r * norm2(&sub(&y.point, &x.point)) + 1e-12);
            }
        }
    }

    #[test]
    fn scale_covariance(p in ellipse_problem(), lambda in 0.1f64..10.0) {
        let r = max_c11_radius(&p).unwrap();
        let rs = max_c11_radius(&p.scaled(lambda)).unwrap();
        prop_assert!((rs - lambda * r).abs() <= 1e-9 * (1.0 + lambda * r));
    }

    #[test]
    fn random_sphere_directions_bound_the_radius(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = stream_rng(seed, 9);
        let data: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .map(|_| {
                let u = unit_vector(&mut rng, 3);
                (u.iter().map(|v| 2.0 * v).collect(), u)
            })
            .collect();
        let p = euclidean(data);
        let r = max_c11_radius(&p).unwrap();
        prop_assert!((r - 2.0).abs() < 1e-9 || r == f64::INFINITY);
    }
}
