mod common;

use common::*;
use hkgf::geometry::{
    convexity_scan, energy_curvature_along_geodesic, hamiltonian, hessian_form, integrate_geodesic, non_convexity_witness,
    rayleigh_quotient, sublevel_radius, GeodesicState, ScanSampler,
};
use hkgf::{gauss, linalg, Cotangent, GaussianTarget, Mat, ScaledGaussian, Vector};
use proptest::prelude::*;
use rand::Rng;

fn unit_eta(d: usize, r: &mut rand_chacha::ChaCha8Rng) -> Cotangent<f64> {
    let e = Cotangent::new(sym(d, r), gauss_vec(d, r), 0.0);
    let n = e.norm_squared().sqrt();
    e.scaled(1.0 / n)
}

#[test]
fn hessian_matches_geodesic_second_derivative() {
    let mut r = rng(30);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = r.random_range(1..=4);
        let t = GaussianTarget::probability(spd(d, 0.7, &mut r), gauss_vec(d, &mut r)).unwrap();
        let p = ScaledGaussian::normalized(spd(d, 0.7, &mut r), gauss_vec(d, &mut r)).unwrap();
        let eta = unit_eta(d, &mut r);
        let (alpha, beta) = (r.random_range(0.0..2.0), r.random_range(0.0..2.0));
        let exact = hessian_form(alpha, beta, &p, &t, &eta).unwrap();
        let fd = energy_curvature_along_geodesic(alpha, beta, &p, &t, &eta, 1e-3).unwrap();
        worst = worst.max(rel_err(exact, fd));
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn hamiltonian_is_conserved() {
    let mut r = rng(31);
    for normalized in [true, false] {
        for _ in 0..10 {
            let d = r.random_range(1..=3);
            let p = point(d, &mut r);
            // Geodesics leave the cone in finite time (Ṡ = −2αS² blows up), so keep |η| moderate.
            let eta = cotangent(d, &mut r);
            let eta = eta.scaled(0.2 / eta.norm_squared().sqrt());
            let st = GeodesicState::new(&p, eta).unwrap();
            let (alpha, beta) = (r.random_range(0.1..1.5), r.random_range(0.1..1.5));
            let path = integrate_geodesic(alpha, beta, &st, 1e-3, 1000, normalized).unwrap();
            let h0 = hamiltonian(alpha, beta, &path[0], normalized).unwrap();
            let h1 = hamiltonian(alpha, beta, path.last().unwrap(), normalized).unwrap();
            assert!((h1 - h0).abs() <= 1e-8 * h0.max(1.0), "drift {:e}", (h1 - h0).abs());
        }
    }
}

#[test]
fn scalar_hessian_examples() {
    let t = GaussianTarget::probability(Mat::from_element(1, 1, 1.0), Vector::zeros(1)).unwrap();
    let p = ScaledGaussian::<f64>::standard(1);
    let zero = Cotangent::new(Mat::zeros(1, 1), Vector::zeros(1), 0.0);
    assert_eq!(hessian_form(1.0, 1.0, &p, &t, &zero).unwrap(), 0.0);
    let eta = Cotangent::new(Mat::from_element(1, 1, 1.0), Vector::zeros(1), 0.0);
    for alpha in [0.5, 1.0, 2.0] {
        assert!((hessian_form(alpha, 0.0, &p, &t, &eta).unwrap() - 8.0 * alpha * alpha).abs() < 1e-13);
    }
    assert!(rayleigh_quotient(1.0, 0.0, &p, &t, &zero).is_err());
}

#[test]
fn pure_transport_scan_respects_lower_bound() {
    let mut r = rng(32);
    for _ in 0..3 {
        let t = GaussianTarget::probability(spd(2, 0.8, &mut r), gauss_vec(2, &mut r)).unwrap();
        let alpha = r.random_range(0.3..2.0);
        let rep = convexity_scan(alpha, 0.0, &t, &ScanSampler::default(), 2000, r.random()).unwrap();
        let bound = alpha * linalg::min_eigenvalue(t.precision());
        assert!(rep.min_quotient >= bound - 1e-6, "{} < {bound}", rep.min_quotient);
        assert!(rep.witness.verified);
        assert_eq!(rep.deciles.len(), 11);
        assert!(rep.deciles.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(rep.deciles[0], rep.min_quotient);
    }
}

#[test]
fn scan_is_deterministic_given_seed() {
    let t = GaussianTarget::probability(Mat::<f64>::identity(2, 2), Vector::zeros(2)).unwrap();
    let a = convexity_scan(1.0, 1.0, &t, &ScanSampler::default(), 300, 9).unwrap();
    let b = convexity_scan(1.0, 1.0, &t, &ScanSampler::default(), 300, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reaction_breaks_convexity_far_from_target() {
    let t = GaussianTarget::probability(Mat::<f64>::identity(2, 2), Vector::zeros(2)).unwrap();
    let sigma = Mat::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
    let eta = Cotangent::new(Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -0.5]), Vector::from_vec(vec![0.6, 0.4]), 0.0);
    let q = non_convexity_witness(1.0, 1.0, &t, &sigma, &eta, &[1.0, 10.0, 100.0]).unwrap();
    assert!(q[0] > q[1] && q[1] > q[2], "{q:?}");
    assert!(q[2] < -10.0);
}

#[test]
fn sublevel_bounds_hold_on_samples() {
    let mut r = rng(33);
    let t = GaussianTarget::probability(spd(2, 0.6, &mut r), gauss_vec(2, &mut r)).unwrap();
    let root = linalg::sqrt_spd(t.gamma());
    for energy in [0.5, 2.0] {
        let b = sublevel_radius(energy, &t).unwrap();
        let mut kept = 0;
        while kept < 2000 {
            let q = gauss_mat(2, &mut r).qr().q();
            let eig = Vector::from_fn(2, |_, _| r.random_range(-4.0f64..4.0).exp());
            let s = linalg::symmetrize(&(&root * (&q * Mat::from_diagonal(&eig) * q.transpose()) * &root));
            let m = t.mean() + gauss_vec(2, &mut r) * 2.0;
            let p = ScaledGaussian::normalized(s, m).unwrap();
            if gauss::shape_relative_entropy(&p, &t).unwrap() > energy {
                continue;
            }
            kept += 1;
            assert!((p.mean() - t.mean()).norm() <= b.r1);
            assert!(linalg::spectral_norm_sym(p.sigma()) <= b.r2);
            assert!(linalg::spectral_norm_sym(&p.precision().unwrap()) <= b.r3);
        }
        assert!(sublevel_radius(energy * 2.0, &t).unwrap().r_e >= b.r_e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hessian_polarization_is_symmetric((seed, d) in seeds(), alpha in 0.0f64..2.0, beta in 0.0f64..2.0) {
        prop_assume!(alpha + beta > 0.0);
        let mut r = rng(seed);
        let t = prob_target(d, &mut r);
        let p = point(d, &mut r).with_kappa(1.0).unwrap();
        let (e1, e2) = (unit_eta(d, &mut r), unit_eta(d, &mut r));
        let sum = Cotangent::new(&e1.s + &e2.s, &e1.mu + &e2.mu, 0.0);
        let dif = Cotangent::new(&e1.s - &e2.s, &e1.mu - &e2.mu, 0.0);
        let h = |e: &Cotangent<f64>| hessian_form(alpha, beta, &p, &t, e).unwrap();
        // Polarization b(e1, e2) = (q(e1+e2) − q(e1−e2))/4 must agree with (q(e1+e2) − q(e1) − q(e2))/2.
        let b1 = (h(&sum) - h(&dif)) / 4.0;
        let b2 = (h(&sum) - h(&e1) - h(&e2)) / 2.0;
        let scale = 1.0 + h(&sum).abs() + h(&dif).abs();
        prop_assert!((b1 - b2).abs() <= 1e-12 * scale);
    }
}
