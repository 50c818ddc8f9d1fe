//! Modulus calculus against closed forms and numeric oracles.

use convext::modulus::{Modulus, ModulusSpec};
use convext::sampling::stream_rng;
use proptest::prelude::*;
use rand::Rng;

/// `t^{1/2}` sampled on `[0, 10]`, with knots clustered at the singular end.
fn sqrt_table(samples: usize) -> Modulus {
    let t: Vec<f64> = (0..samples).map(|i| 10.0 * (i as f64 / (samples - 1) as f64).powi(2)).collect();
    let w: Vec<f64> = t.iter().map(|v| v.sqrt()).collect();
    Modulus::tabulated(t, w).unwrap()
}

/// Composite trapezoid rule on a fine uniform grid.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Bisection inverse of an increasing function.
fn bisect_inverse(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < s {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn phi_closed_forms() {
    let m = Modulus::power(1.0, 1.0).unwrap();
    assert!((m.phi(2.0).unwrap() - 2.0).abs() < 1e-15);
    let m = Modulus::power(1.0, 0.5).unwrap();
    assert!((m.phi(4.0).unwrap() - 16.0 / 3.0).abs() < 1e-14);
    assert!(m.phi(-1.0).is_err());
}

#[test]
fn conjugate_closed_forms() {
    let lin = Modulus::power(1.0, 1.0).unwrap();
    let half = Modulus::power(1.0, 0.5).unwrap();
    for d in [0.1f64, 0.5, 1.0, 3.0] {
        assert!((lin.phi_conjugate(d).unwrap() - d * d / 2.0).abs() < 1e-14);
        assert!((half.phi_conjugate(d).unwrap() - d.powi(3) / 3.0).abs() < 1e-13);
        let total = half.phi(half.omega_inverse(d).unwrap()).unwrap() + half.phi_conjugate(d).unwrap();
        assert!((total - d.powi(3)).abs() < 1e-12);
    }
    assert!(lin.phi_conjugate(-0.1).is_err());
}

#[test]
fn omega_inverse_closed_forms() {
    assert!((Modulus::power(2.0, 1.0).unwrap().omega_inverse(4.0).unwrap() - 2.0).abs() < 1e-15);
    assert!((Modulus::power(1.0, 0.5).unwrap().omega_inverse(3.0).unwrap() - 9.0).abs() < 1e-13);
    assert!(Modulus::power(1.0, 0.5).unwrap().omega_inverse(-3.0).is_err());
}

#[test]
fn tabulated_phi_matches_closed_form() {
    let tab = sqrt_table(40001);
    for t in [0.5f64, 1.0, 2.5, 7.0, 10.0] {
        let exact = 2.0 / 3.0 * t.powf(1.5);
        let got = tab.phi(t).unwrap();
        assert!((got - exact).abs() < 1e-8, "t = {t}: {got} vs {exact}");
    }
}

#[test]
fn tabulated_quadrature_agrees_with_trapezoid_oracle() {
    let tab = Modulus::tabulated(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 2.0, 3.0, 4.0]).unwrap();
    for t in [0.3, 1.5, 3.3, 6.0] {
        let oracle = trapezoid(|s| tab.omega(s).unwrap(), 0.0, t, 200_000);
        assert!((tab.phi(t).unwrap() - oracle).abs() < 1e-8);
    }
}

#[test]
fn tabulated_fenchel_identity_and_round_trip() {
    let tab = Modulus::tabulated(vec![0.0, 0.5, 1.0, 2.0, 5.0], vec![0.0, 1.0, 1.6, 2.2, 3.0]).unwrap();
    let mut rng = stream_rng(7, 0);
    for _ in 0..100 {
        let d = rng.random_range(0.01..4.0);
        let inv = tab.omega_inverse(d).unwrap();
        let oracle = bisect_inverse(|t| tab.omega(t).unwrap(), d);
        assert!((inv - oracle).abs() < 1e-8);
        assert!((tab.omega(inv).unwrap() - d).abs() < 1e-10);
        let lhs = tab.phi(inv).unwrap() + tab.phi_conjugate(d).unwrap();
        assert!((lhs - d * inv).abs() < 1e-8, "delta = {d}");
    }
}

#[test]
fn rejects_bounded_or_non_concave_tables() {
    assert!(Modulus::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).is_err());
    assert!(Modulus::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 3.0]).is_err());
    assert!(Modulus::new(ModulusSpec::Power { k: 1.0, alpha: 1.5 }).is_err());
    assert!(Modulus::new(ModulusSpec::Power { k: 0.0, alpha: 0.5 }).is_err());
}

fn power_modulus() -> impl Strategy<Value = Modulus> {
    (prop::sample::select(vec![0.5, 1.0, 2.0]), prop::sample::select(vec![0.25, 0.5, 1.0]))
        .prop_map(|(k, a)| Modulus::power(k, a).unwrap())
}

fn any_modulus() -> impl Strategy<Value = Modulus> {
    prop_oneof![
        power_modulus(),
        Just(Modulus::tabulated(vec![0.0, 0.5, 1.0, 2.0, 5.0], vec![0.0, 1.0, 1.6, 2.2, 3.0]).unwrap()),
    ]
}

proptest! {
    #[test]
    fn fenchel_identity(m in power_modulus(), d in 1e-3f64..10.0) {
        let inv = m.omega_inverse(d).unwrap();
        let lhs = m.phi(inv).unwrap() + m.phi_conjugate(d).unwrap();
        prop_assert!((lhs - d * inv).abs() <= 1e-8 * (1.0 + d * inv));
    }

    #[test]
    fn growth_inequalities(m in any_modulus(), t in 1e-4f64..20.0) {
        let phi = |s: f64| m.phi(s).unwrap();
        let omega = |s: f64| m.omega(s).unwrap();
        prop_assert!(phi(2.0 * t) > t * omega(t));
        prop_assert!(2.0 * t * omega(t) >= phi(2.0 * t) * (1.0 - 1e-12));
        prop_assert!(phi(t) >= 0.5 * t * omega(0.5 * t) * (1.0 - 1e-12));
    }

    #[test]
    fn phi_and_conjugate_are_convex(m in any_modulus(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let mid = 0.5 * (a + b);
        prop_assert!(m.phi(mid).unwrap() <= 0.5 * (m.phi(a).unwrap() + m.phi(b).unwrap()) + 1e-10);
        prop_assert!(m.phi_conjugate(mid).unwrap() <= 0.5 * (m.phi_conjugate(a).unwrap() + m.phi_conjugate(b).unwrap()) + 1e-10);
    }

    #[test]
    fn conjugate_below_young_bound(m in any_modulus(), s in 0.0f64..10.0) {
        prop_assert!(m.phi_conjugate(s).unwrap() <= s * m.omega_inverse(s).unwrap() + 1e-12);
    }

    #[test]
    fn omega_is_increasing_and_concave(m in any_modulus(), a in 0.0f64..10.0, h in 1e-3f64..2.0) {
        let w = |s: f64| m.omega(s).unwrap();
        prop_assert!(w(a + h) > w(a));
        prop_assert!(w(a) + w(a + 2.0 * h) - 2.0 * w(a + h) <= 1e-12);
    }

    #[test]
    fn phi_inverse_round_trip(m in any_modulus(), v in 1e-3f64..10.0) {
        let t = m.phi_inverse(v).unwrap();
        prop_assert!((m.phi(t).unwrap() - v).abs() < 1e-9 * (1.0 + v));
    }
}
