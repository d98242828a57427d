mod common;

use common::*;
use hkgf::descent::{
    run_descent, DescentConfig, EstimatorConfig, FnPotential, LogisticData, LogisticPotential, MomentEstimator, Potential,
    QuadraticPotential,
};
use hkgf::flow::{integrate, rhs_gaussian_target, FlowConfig, GaussianFlow, MassDynamics};
use hkgf::{linalg, GaussianTarget, Mat, ScaledGaussian, Vector};
use rand::Rng;

fn setup(seed: u64) -> (GaussianTarget<f64>, ScaledGaussian<f64>) {
    let mut r = rng(seed);
    let t = GaussianTarget::new(spd(2, 0.7, &mut r), gauss_vec(2, &mut r), 1.5).unwrap();
    let p0 = ScaledGaussian::new(spd(2, 0.7, &mut r), gauss_vec(2, &mut r), 0.6).unwrap();
    (t, p0)
}

fn dist(a: &ScaledGaussian<f64>, b: &ScaledGaussian<f64>) -> f64 {
    (a.sigma() - b.sigma()).norm() + (a.mean() - b.mean()).norm()
}

#[test]
fn descent_converges_to_flow_at_first_order() {
    let (t, p0) = setup(50);
    let pot = QuadraticPotential::new(t.clone());
    let mut flow = GaussianFlow::new(1.0, 1.0, t.clone(), MassDynamics::Normalized);
    let reference = integrate(&mut flow, &p0, &FlowConfig::new(1.0, 1.0, 1e-3, 1.0)).unwrap();
    let err = |tau: f64| {
        let n = (1.0 / tau).round() as usize;
        let res = run_descent(&DescentConfig::new(1.0, 1.0, tau, n), &p0, &pot).unwrap();
        dist(&res.final_point, reference.last())
    };
    let (e1, e2, e3) = (err(0.02), err(0.01), err(0.005));
    let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
    assert!(order >= 0.9, "observed order {order}");
}

#[test]
fn one_iteration_is_an_euler_step() {
    let (t, p0) = setup(51);
    let pot = QuadraticPotential::new(t.clone());
    let v = rhs_gaussian_target(1.0, 1.0, &p0, &t, MassDynamics::Normalized).unwrap();
    let err = |tau: f64| {
        let res = run_descent(&DescentConfig::new(1.0, 1.0, tau, 1), &p0, &pot).unwrap();
        let p = &res.final_point;
        (p.sigma() - (p0.sigma() + &v.d_sigma * tau)).norm() + (p.mean() - (p0.mean() + &v.d_m * tau)).norm()
    };
    let ratio = err(1e-2) / err(5e-3);
    assert!((ratio - 4.0).abs() < 0.5, "local error ratio {ratio}");
}

#[test]
fn discrete_mass_follows_closed_form() {
    let (t, p0) = setup(52);
    let pot = QuadraticPotential::new(t.clone());
    let mut flow = GaussianFlow::new(1.0, 1.0, t.clone(), MassDynamics::Scaled);
    let reference = integrate(&mut flow, &p0, &FlowConfig::new(1.0, 1.0, 1e-3, 1.0)).unwrap();
    let k_ref = hkgf::flow::explicit_kappa(&reference, 1.0, &t).unwrap();
    let k_end = *k_ref.last().unwrap();
    let err = |tau: f64| {
        let mut cfg = DescentConfig::new(1.0, 1.0, tau, (1.0 / tau).round() as usize);
        cfg.track_mass = true;
        (run_descent(&cfg, &p0, &pot).unwrap().final_point.kappa() - k_end).abs()
    };
    let ratio = err(0.02) / err(0.01);
    assert!((1.6..2.6).contains(&ratio), "mass error ratio {ratio}");
}

#[test]
fn no_reaction_keeps_mass() {
    let (t, p0) = setup(53);
    let pot = QuadraticPotential::new(t);
    let mut cfg = DescentConfig::new(1.0, 0.0, 0.01, 50);
    cfg.track_mass = true;
    assert_eq!(run_descent(&cfg, &p0, &pot).unwrap().final_point.kappa(), p0.kappa());
}

#[test]
fn seeded_runs_are_bitwise_identical() {
    let (t, p0) = setup(54);
    let pot = QuadraticPotential::new(t);
    let mut cfg = DescentConfig::new(0.5, 0.5, 0.01, 200);
    cfg.estimator = EstimatorConfig::MonteCarlo { n_mc: 16, antithetic: false };
    cfg.seed = 77;
    let a = run_descent(&cfg, &p0, &pot).unwrap();
    let b = run_descent(&cfg, &p0, &pot).unwrap();
    assert_eq!(a.records, b.records);
    cfg.seed = 78;
    let c = run_descent(&cfg, &p0, &pot).unwrap();
    assert_ne!(a.final_point, c.final_point);
}

#[test]
fn monte_carlo_gradient_within_three_standard_errors() {
    let mut r = rng(55);
    let t = prob_target(3, &mut r);
    let pot = QuadraticPotential::new(t.clone());
    let (sigma, m) = (spd(3, 0.5, &mut r), gauss_vec(3, &mut r));
    let exact = pot.gaussian_moments(&sigma, &m).unwrap();
    let n = 10_000;
    let mut est = MomentEstimator::monte_carlo(n, false, 5);
    let mc = est.estimate(&pot, &sigma, &m).unwrap();
    let cov = t.precision() * &sigma * t.precision();
    for i in 0..3 {
        let se = (cov[(i, i)] / n as f64).sqrt();
        assert!((mc.e_grad[i] - exact.e_grad[i]).abs() <= 3.0 * se);
    }
    assert!((mc.e_hess - exact.e_hess).norm() < 1e-12, "constant Hessian is exact from any sample");
}

#[test]
fn gauss_hermite_integrates_quartic_exactly() {
    let pot = FnPotential::<f64> {
        dim: 1,
        value: Box::new(|x| x[0].powi(4)),
        gradient: Box::new(|x| Vector::from_element(1, 4.0 * x[0].powi(3))),
        hessian: Box::new(|x| Mat::from_element(1, 1, 12.0 * x[0] * x[0])),
        log_normalizer: None,
    };
    let (m, s2) = (0.7f64, 1.9f64);
    let mut est = MomentEstimator::gauss_hermite(10);
    let mom = est.estimate(&pot, &Mat::from_element(1, 1, s2), &Vector::from_element(1, m)).unwrap();
    let ev = m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2;
    assert!((mom.e_v - ev).abs() <= 1e-8 * ev);
    assert!((mom.e_grad[0] - 4.0 * (m.powi(3) + 3.0 * m * s2)).abs() <= 1e-8 * ev);
    assert!((mom.e_hess[(0, 0)] - 12.0 * (m * m + s2)).abs() <= 1e-8 * ev);
}

#[test]
fn gauss_hermite_rejects_high_dimension() {
    let pot = QuadraticPotential::new(GaussianTarget::probability(Mat::<f64>::identity(5, 5), Vector::zeros(5)).unwrap());
    let mut est = MomentEstimator::gauss_hermite(3);
    assert!(est.estimate(&pot, &Mat::identity(5, 5), &Vector::zeros(5)).is_err());
}

#[test]
fn logistic_hessian_is_psd() {
    let data = LogisticData::synthetic(100, &[1.0, -2.0], 0.3, 9).unwrap();
    let pot = LogisticPotential::new(data, 1.0, true, 0.0).unwrap();
    let mut r = rng(56);
    for _ in 0..1000 {
        let th = gauss_vec(3, &mut r) * r.random_range(0.1..10.0);
        assert!(linalg::min_eigenvalue(&pot.hessian(&th)) >= -1e-12);
    }
}

#[test]
fn logistic_data_csv_roundtrip() {
    let data = LogisticData::synthetic(30, &[0.5, 1.5, -1.0], 0.0, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    data.write_csv(&path).unwrap();
    assert_eq!(LogisticData::from_csv(&path).unwrap(), data);
    std::fs::write(&path, "x_1,y\n0.5,2\n").unwrap();
    assert!(LogisticData::from_csv(&path).is_err());
}

#[test]
fn descent_error_reports_iteration() {
    let (t, p0) = setup(57);
    let pot = QuadraticPotential::new(t);
    // Huge transport steps make M = I + τα(Σ⁻¹ − Γ⁻¹) indefinite.
    let cfg = DescentConfig::new(1.0, 0.0, 1e3, 10);
    match run_descent(&cfg, &p0, &pot) {
        Err(hkgf::Error::Descent { iteration, .. }) => assert!(iteration < 10),
        other => panic!("expected a descent error, got {other:?}"),
    }
}
