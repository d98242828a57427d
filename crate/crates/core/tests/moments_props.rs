mod common;

use common::*;
use hkgf::moments::{moment2, quartic_moment, trace_moment, QuadraticPoly};
use hkgf::{Mat, Vector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn diagonal_cases_by_hand() {
    for d in 1..=6 {
        let id = Mat::<f64>::identity(d, d);
        assert_eq!(quartic_moment(&id, &id), (2 * d + d * d) as f64);
        assert_eq!(trace_moment(&id), d as f64);
    }
    // diag(a)·diag(b): Σ a_i b_i E[y_i⁴] + Σ_{i≠j} a_i b_j = 2Σ a_i b_i + (Σa)(Σb)
    let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, -3.0]));
    let b = Mat::from_diagonal(&Vector::from_vec(vec![0.5, 4.0, 1.0]));
    assert_eq!(quartic_moment(&a, &b), 2.0 * (0.5 + 8.0 - 3.0));
    let e1 = Vector::from_vec(vec![1.0, 0.0]);
    let e2 = Vector::from_vec(vec![0.0, 1.0]);
    assert_eq!(moment2(&e1, &e2), 0.0);
}

#[test]
fn quartic_within_three_standard_errors() {
    let mut r = rng(60);
    let a = sym(3, &mut r);
    let b = sym(3, &mut r);
    let n = 200_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let y = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut r));
        let v: f64 = y.dot(&(&a * &y)) * y.dot(&(&b * &y));
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - quartic_moment(&a, &b)).abs() <= 3.0 * se);
}

#[test]
fn f32_instantiation_agrees_with_f64() {
    let a = Mat::<f32>::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 2.0]);
    let exact = quartic_moment(&a.map(f64::from), &a.map(f64::from));
    assert!((f64::from(quartic_moment(&a, &a)) - exact).abs() < 1e-5);
}

proptest! {
    #[test]
    fn quadratic_poly_variance_nonnegative((seed, _) in seeds()) {
        let mut r = rng(seed);
        let poly = QuadraticPoly { p: sym(3, &mut r), q: gauss_vec(3, &mut r), r: 0.3 };
        let mean = poly.mean();
        prop_assert!(poly.mean_square() - mean * mean >= -1e-12);
    }
}
