use hkgf::descent::{LogisticData, LogisticPotential, Potential};
use hkgf_verify::{damped_newton_map, LogisticOracle};
use nalgebra::DVector;

fn setup(intercept: bool) -> (LogisticOracle, LogisticPotential) {
    let data = LogisticData::synthetic(60, &[1.2, -0.7, 0.3], 0.4, 17).unwrap();
    let oracle = LogisticOracle::new(&data.features, &data.labels, 0.05, intercept, 0.5);
    let pot = LogisticPotential::new(data, 0.05, intercept, 0.5).unwrap();
    (oracle, pot)
}

#[test]
fn oracle_agrees_with_library_potential() {
    for intercept in [false, true] {
        let (oracle, pot) = setup(intercept);
        assert_eq!(oracle.dim(), Potential::<f64>::dim(&pot));
        for s in 0..5 {
            let theta = DVector::from_fn(oracle.dim(), |i, _| ((i + 3 * s) as f64 * 0.7).sin() * 2.0);
            let (g, h) = oracle.gradient_hessian(&theta);
            let scale = oracle.value(&theta).abs().max(1.0);
            assert!((oracle.value(&theta) - pot.value(&theta)).abs() < 1e-12 * scale);
            assert!((g - pot.gradient(&theta)).norm() < 1e-10 * scale);
            assert!((h - pot.hessian(&theta)).norm() < 1e-10 * scale);
        }
    }
}

#[test]
fn oracle_gradient_matches_central_differences() {
    let (oracle, _) = setup(true);
    let theta = DVector::from_vec(vec![0.3, -1.1, 0.8, 0.2]);
    let (g, h) = oracle.gradient_hessian(&theta);
    let eps = 1e-5;
    for i in 0..oracle.dim() {
        let mut e = DVector::zeros(oracle.dim());
        e[i] = eps;
        let fd = (oracle.value(&(&theta + &e)) - oracle.value(&(&theta - &e))) / (2.0 * eps);
        assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0), "component {i}: {fd} vs {}", g[i]);
        let (gp, _) = oracle.gradient_hessian(&(&theta + &e));
        let (gm, _) = oracle.gradient_hessian(&(&theta - &e));
        let col = (gp - gm) / (2.0 * eps);
        assert!((col - h.column(i)).norm() < 1e-5 * h.norm());
    }
}

#[test]
fn newton_reaches_a_stationary_point() {
    let (oracle, _) = setup(true);
    let (theta, gnorm) = damped_newton_map(&oracle, 1e-12, 100).expect("converges");
    assert!(gnorm <= 1e-12);
    // Strictly convex: every small perturbation raises the objective.
    let v0 = oracle.value(&theta);
    for i in 0..oracle.dim() {
        let mut e = DVector::zeros(oracle.dim());
        e[i] = 1e-3;
        assert!(oracle.value(&(&theta + &e)) > v0 && oracle.value(&(&theta - &e)) > v0);
    }
}
