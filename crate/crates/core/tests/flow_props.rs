mod common;

use common::*;
use hkgf::descent::{MomentEstimator, QuadraticPotential};
use hkgf::flow::{
    eigen_envelope, explicit_a, explicit_kappa, integrate, integrate_simple, rhs_eigen, rhs_general_target,
    rhs_gaussian_target, rhs_simple, ExplicitBranch, FlowConfig, GaussianFlow, MassDynamics,
};
use hkgf::gauss::{self, to_simple, to_standard};
use hkgf::onsager::apply_hk_red;
use hkgf::{decay, GaussianTarget, Mat, ScaledGaussian, SimpleCoords, Vector};
use proptest::prelude::*;
use rand::Rng;

fn gradient_form(alpha: f64, beta: f64, p: &ScaledGaussian<f64>, t: &GaussianTarget<f64>) -> hkgf::Tangent<f64> {
    apply_hk_red(alpha, beta, p, &gauss::entropy_differential(p, t).unwrap()).unwrap().scaled(-1.0)
}

#[test]
fn rhs_is_minus_onsager_times_differential() {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = r.random_range(1..=5);
        let (p, t) = (point(d, &mut r), target(d, &mut r));
        let (alpha, beta) = (r.random_range(0.0..2.0), r.random_range(0.0..2.0));
        let v = rhs_gaussian_target(alpha, beta, &p, &t, MassDynamics::Scaled).unwrap();
        let w = gradient_form(alpha, beta, &p, &t);
        let scale = 1.0 + v.norm_squared().sqrt();
        worst = worst.max((v.d_sigma - w.d_sigma).norm() / scale);
        worst = worst.max((v.d_m - w.d_m).norm() / scale);
        worst = worst.max((v.d_kappa - w.d_kappa).abs() / scale);
    }
    assert!(worst <= 1e-12, "worst {worst:e}");
}

#[test]
fn scalar_rhs_examples() {
    let t = GaussianTarget::probability(Mat::from_element(1, 1, 1.0), Vector::zeros(1)).unwrap();
    let p = ScaledGaussian::normalized(Mat::from_element(1, 1, 2.0), Vector::zeros(1)).unwrap();
    let v = rhs_gaussian_target(1.0, 0.0, &p, &t, MassDynamics::Scaled).unwrap();
    assert_eq!(v.d_sigma[(0, 0)], -2.0);
    assert_eq!(v.d_kappa, 0.0);

    let qb = SimpleCoords::new(Mat::from_element(1, 1, 1.0), Vector::zeros(1), 0.0).unwrap();
    let q = SimpleCoords::new(Mat::from_element(1, 1, 2.0), Vector::zeros(1), 0.0).unwrap();
    assert_eq!(rhs_simple(1.0, 0.0, &q, &qb).unwrap().da[(0, 0)], -4.0);
    assert_eq!(rhs_simple(1.0, 0.7, &qb, &qb).unwrap().da.norm(), 0.0);

    let (a, _) = explicit_a(2f64.ln(), 0.0, 2.0, &Mat::from_element(1, 1, 3.0), &Mat::from_element(1, 1, 1.0)).unwrap();
    // Ā + e^{−βt}(A₀ − Ā) = 1 + 2/4.
    assert!((a[(0, 0)] - 1.5).abs() < 1e-14);

    let e = rhs_eigen(1.0, 1.0, &Mat::from_element(1, 1, 2.0), &t, 1e-8).unwrap();
    assert_eq!(e.eigen_dot[0], -4.0);
    let e = rhs_eigen(0.4, 1.0, &Mat::identity(1, 1), &t, 1e-8).unwrap();
    assert_eq!(e.b_dot.norm(), 0.0);
}

#[test]
fn general_target_reduces_to_gaussian_target() {
    let mut r = rng(11);
    for _ in 0..50 {
        let d = r.random_range(1..=4);
        let (p, t) = (point(d, &mut r), target(d, &mut r));
        let pot = QuadraticPotential::new(t.clone());
        let mut est = MomentEstimator::Exact;
        for mass in [MassDynamics::Scaled, MassDynamics::Normalized] {
            let a = rhs_general_target(0.8, 1.1, &p, &pot, &mut est, mass).unwrap();
            let b = rhs_gaussian_target(0.8, 1.1, &p, &t, mass).unwrap();
            let scale = 1.0 + b.norm_squared().sqrt();
            assert!((&a.d_sigma - &b.d_sigma).norm() <= 1e-12 * scale);
            assert!((&a.d_m - &b.d_m).norm() <= 1e-12 * scale);
            assert!((a.d_kappa - b.d_kappa).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn shape_dynamics_ignore_mass() {
    let mut r = rng(12);
    for _ in 0..100 {
        let d = r.random_range(1..=5);
        let (p, t) = (point(d, &mut r), target(d, &mut r));
        let v0 = rhs_gaussian_target(0.6, 0.9, &p.with_kappa(0.1).unwrap(), &t, MassDynamics::Scaled).unwrap();
        for k in [1.0, 10.0] {
            let v = rhs_gaussian_target(0.6, 0.9, &p.with_kappa(k).unwrap(), &t, MassDynamics::Scaled).unwrap();
            assert_eq!(v.d_sigma, v0.d_sigma);
            assert_eq!(v.d_m, v0.d_m);
        }
    }
}

#[test]
fn exponent_coordinates_are_equivariant() {
    let mut r = rng(13);
    for _ in 0..50 {
        let d = r.random_range(1..=4);
        let (p, t) = (point(d, &mut r), target(d, &mut r));
        let (alpha, beta) = (r.random_range(0.1..2.0), r.random_range(0.1..2.0));
        let q = to_simple(&p).unwrap();
        let qb = t.simple_coords().unwrap();
        let dq = rhs_simple(alpha, beta, &q, &qb).unwrap();
        let h = 1e-6;
        let shift = |s: f64| {
            let q = SimpleCoords::new(q.a() + &dq.da * s, q.b() + &dq.db * s, q.c() + dq.dc * s).unwrap();
            to_standard(&q).unwrap()
        };
        let (fwd, bwd) = (shift(h), shift(-h));
        let ds = (fwd.sigma() - bwd.sigma()) / (2.0 * h);
        let dm = (fwd.mean() - bwd.mean()) / (2.0 * h);
        let dk = (fwd.kappa() - bwd.kappa()) / (2.0 * h);
        let v = rhs_gaussian_target(alpha, beta, &p, &t, MassDynamics::Scaled).unwrap();
        let scale = 1.0 + v.norm_squared().sqrt();
        assert!((&ds - &v.d_sigma).norm() <= 1e-6 * scale, "{}", (&ds - &v.d_sigma).norm());
        assert!((dm - &v.d_m).norm() <= 1e-6 * scale);
        assert!((dk - v.d_kappa).abs() <= 1e-6 * scale);
    }
}

#[test]
fn explicit_precision_matches_rk4() {
    let mut r = rng(14);
    for _ in 0..5 {
        let d = 3;
        let (a0, ab) = (spd(d, 1.0, &mut r), spd(d, 1.0, &mut r));
        let (alpha, beta) = (r.random_range(0.1..1.5), r.random_range(0.1..1.5));
        let q0 = SimpleCoords::new(a0.clone(), Vector::zeros(d), 0.0).unwrap();
        let qb = SimpleCoords::new(ab.clone(), Vector::zeros(d), 0.0).unwrap();
        let mut cfg = FlowConfig::new(alpha, beta, 1e-3, 5.0);
        cfg.record_every = 500;
        let traj = integrate_simple(&q0, &qb, &cfg).unwrap();
        for (t, q) in traj.times.iter().zip(&traj.points) {
            let (a, branch) = explicit_a(*t, alpha, beta, &a0, &ab).unwrap();
            assert_ne!(branch, ExplicitBranch::Equilibrium);
            assert!(mat_rel_err(&a, q.a()) <= 1e-8, "t = {t}");
        }
    }
}

#[test]
fn explicit_precision_handles_equilibrium_and_t0() {
    let mut r = rng(15);
    let (a0, ab) = (spd(2, 1.0, &mut r), spd(2, 1.0, &mut r));
    let (a, _) = explicit_a(0.0, 1.0, 1.0, &a0, &ab).unwrap();
    assert!(mat_rel_err(&a, &a0) < 1e-14);
    let (a, branch) = explicit_a(3.0, 1.0, 1.0, &ab, &ab).unwrap();
    assert_eq!((a, branch), (ab, ExplicitBranch::Equilibrium));
}

#[test]
fn rk4_order_against_closed_form() {
    let mut r = rng(16);
    let (a0, ab) = (spd(2, 1.0, &mut r), spd(2, 1.0, &mut r));
    let q0 = SimpleCoords::new(a0.clone(), Vector::zeros(2), 0.0).unwrap();
    let qb = SimpleCoords::new(ab.clone(), Vector::zeros(2), 0.0).unwrap();
    let (exact, _) = explicit_a(1.0, 1.0, 0.5, &a0, &ab).unwrap();
    let err = |dt: f64| {
        let traj = integrate_simple(&q0, &qb, &FlowConfig::new(1.0, 0.5, dt, 1.0)).unwrap();
        (traj.points.last().unwrap().a() - &exact).norm()
    };
    let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
    let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn equilibrium_start_stays_put() {
    let mut r = rng(17);
    let t = target(3, &mut r);
    let mut flow = GaussianFlow::new(1.0, 1.0, t.clone(), MassDynamics::Scaled);
    let traj = integrate(&mut flow, &t.as_measure(), &FlowConfig::new(1.0, 1.0, 0.01, 1.0)).unwrap();
    for p in &traj.points {
        assert!((p.sigma() - t.gamma()).norm() < 1e-13);
        assert!((p.mean() - t.mean()).norm() < 1e-13);
        assert!((p.kappa() - t.varkappa()).abs() < 1e-13);
    }
}

#[test]
fn integrated_covariance_matches_closed_form_inverse() {
    let mut r = rng(18);
    let t = GaussianTarget::probability(spd(2, 1.0, &mut r), gauss_vec(2, &mut r)).unwrap();
    let p0 = ScaledGaussian::new(spd(2, 1.0, &mut r), gauss_vec(2, &mut r), 1.0).unwrap();
    let mut flow = GaussianFlow::new(0.7, 0.4, t.clone(), MassDynamics::Scaled);
    let traj = integrate(&mut flow, &p0, &FlowConfig::new(0.7, 0.4, 1e-3, 2.0)).unwrap();
    let (a, _) = explicit_a(2.0, 0.7, 0.4, &p0.precision().unwrap(), t.precision()).unwrap();
    let sigma = a.try_inverse().unwrap();
    assert!((traj.last().sigma() - sigma).norm() <= 1e-6);
}

#[test]
fn energy_difference_quotient_converges_to_dissipation() {
    let mut r = rng(19);
    let (p0, t) = (point(3, &mut r), target(3, &mut r));
    let mut flow = GaussianFlow::new(0.9, 0.6, t.clone(), MassDynamics::Scaled);
    let d0 = decay::dissipation_split(0.9, 0.6, &p0, &t, MassDynamics::Scaled).unwrap().total(p0.kappa());
    let e0 = gauss::relative_entropy(&p0, &t).unwrap();
    let err = |dt: f64| {
        let mut flow = GaussianFlow::new(0.9, 0.6, t.clone(), MassDynamics::Scaled);
        let traj = integrate(&mut flow, &p0, &FlowConfig::new(0.9, 0.6, dt, dt)).unwrap();
        ((traj.total_energy(1) - e0) / dt + d0).abs()
    };
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&dt| err(dt)).collect();
    let order = (errs[0] / errs[2]).log2() / 2.0;
    assert!(order >= 1.0 - 0.05, "observed order {order}");
    // The recorded dissipation is the one the flow uses.
    let traj = integrate(&mut flow, &p0, &FlowConfig::new(0.9, 0.6, 0.01, 0.1)).unwrap();
    assert!((traj.total_dissipation(0) - d0).abs() <= 1e-14 * d0);
}

#[test]
fn mass_closed_form_matches_integration() {
    let mut r = rng(20);
    for beta in [0.0, 0.5, 1.3] {
        let (p0, t) = (point(2, &mut r), target(2, &mut r));
        let mut flow = GaussianFlow::new(0.8, beta, t.clone(), MassDynamics::Scaled);
        let traj = integrate(&mut flow, &p0, &FlowConfig::new(0.8, beta, 1e-3, 3.0)).unwrap();
        let k = explicit_kappa(&traj, beta, &t).unwrap();
        for (kc, p) in k.iter().zip(&traj.points) {
            assert!(rel_err(*kc, p.kappa()) <= 1e-5, "beta {beta}: {kc} vs {}", p.kappa());
            if beta == 0.0 {
                assert_eq!(p.kappa(), p0.kappa());
            }
        }
    }
}

#[test]
fn csv_header_layout() {
    let t = GaussianTarget::probability(Mat::<f64>::identity(2, 2), Vector::zeros(2)).unwrap();
    let mut flow = GaussianFlow::new(1.0, 1.0, t.clone(), MassDynamics::Scaled);
    let mut cfg = FlowConfig::new(1.0, 1.0, 0.1, 0.3);
    cfg.track_eigen = true;
    let p0 = ScaledGaussian::normalized(Mat::identity(2, 2) * 2.0, Vector::zeros(2)).unwrap();
    let traj = integrate(&mut flow, &p0, &cfg).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,sigma_1_1,sigma_1_2,sigma_2_1,sigma_2_2,m_1,m_2,kappa,h_cov,h_mean,d_cov,d_mean,b_1,b_2"
    );
    assert_eq!(text.lines().count(), 1 + traj.len());
}

fn random_run(seed: u64, d: usize) -> (GaussianTarget<f64>, ScaledGaussian<f64>, f64, f64) {
    let mut r = rng(seed);
    let t = target(d, &mut r);
    let p0 = ScaledGaussian::new(
        linalg_sandwich(t.gamma(), &spd(d, 1.5, &mut r)),
        t.mean() + gauss_vec(d, &mut r) * 2.0,
        r.random_range(0.2..3.0),
    )
    .unwrap();
    (t, p0, r.random_range(0.0..1.5), r.random_range(0.05..1.5))
}

fn linalg_sandwich(g: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let root = hkgf::linalg::sqrt_spd(g);
    hkgf::linalg::symmetrize(&(&root * b * &root))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_stay_spd_and_dissipate((seed, d) in seeds()) {
        let (t, p0, alpha, beta) = random_run(seed, d);
        let mut flow = GaussianFlow::new(alpha, beta, t.clone(), MassDynamics::Scaled);
        let mut cfg = FlowConfig::new(alpha, beta, 1e-2, 3.0);
        cfg.monotonicity_slack = Some(1e-10);
        let traj = integrate(&mut flow, &p0, &cfg).unwrap();
        for p in &traj.points {
            prop_assert!(hkgf::linalg::min_eigenvalue(p.sigma()) > 0.0);
        }
        for i in 1..traj.len() {
            prop_assert!(traj.total_energy(i) <= traj.total_energy(i - 1) + 1e-10 * (1.0 + traj.total_energy(i - 1)));
        }
    }

    #[test]
    fn coarse_precision_bound((seed, d) in seeds()) {
        let (t, p0, alpha, beta) = random_run(seed, d);
        let q0 = to_simple(&p0).unwrap();
        let qb = t.simple_coords().unwrap();
        let traj = integrate_simple(&q0, &qb, &FlowConfig::new(alpha, beta, 1e-2, 4.0)).unwrap();
        let d0 = (q0.a() - qb.a()).norm_squared();
        for (time, q) in traj.times.iter().zip(&traj.points) {
            let dev = (q.a() - qb.a()).norm_squared();
            prop_assert!(dev <= (-beta * time).exp() * d0 * (1.0 + 1e-10) + 1e-14);
        }
    }

    #[test]
    fn eigenvalues_stay_in_envelope((seed, d) in seeds()) {
        let (t, p0, alpha, beta) = random_run(seed, d);
        let mut flow = GaussianFlow::new(alpha, beta, t.clone(), MassDynamics::Normalized);
        let mut cfg = FlowConfig::new(alpha, beta, 1e-2, 3.0);
        cfg.track_eigen = true;
        let traj = integrate(&mut flow, &p0, &cfg).unwrap();
        let nu = decay::refined_rates(alpha, beta, &t, 1.0).unwrap().nu_cov;
        let eig = traj.eigen.as_ref().unwrap();
        for (time, b) in traj.times.iter().zip(eig) {
            for i in 0..d {
                let (lo, hi) = eigen_envelope(eig[0][i], nu, *time);
                prop_assert!(b[i] >= lo * (1.0 - 1e-10) && b[i] <= hi * (1.0 + 1e-10), "b = {}, envelope ({lo}, {hi})", b[i]);
            }
        }
    }
}
