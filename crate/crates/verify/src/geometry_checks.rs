//! Hessian, geodesics and convexity.

use rand::Rng;

use hkgf::geometry::{
    convexity_scan, energy_curvature_along_geodesic, hamiltonian, hessian_form, integrate_geodesic, non_convexity_witness,
    GeodesicState, ScanSampler,
};
use hkgf::{linalg, GaussianTarget, ScaledGaussian};

use crate::sample::*;
use crate::{seed_for, Outcome, VerifyOptions};

pub fn hessian_oracle(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 4));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = r.random_range(1..=4);
        let t = prob_target(d, 0.7, &mut r);
        let p = ScaledGaussian::normalized(spd(d, 0.7, &mut r), gauss_vec(d, &mut r))?;
        let eta = unit_shape_cotangent(d, &mut r);
        let (alpha, beta) = (r.random_range(0.0..2.0), r.random_range(0.0..2.0));
        let exact = hessian_form(alpha, beta, &p, &t, &eta)?;
        let fd = energy_curvature_along_geodesic(alpha, beta, &p, &t, &eta, 1e-3)?;
        worst = worst.max(rel_err(exact, fd));
    }

    // Hamiltonian drift along unit-time geodesics, with and without mass.
    let mut drift = 0.0f64;
    for i in 0..20 {
        let normalized = i % 2 == 0;
        let d = r.random_range(1..=3);
        let p = point(d, &mut r);
        // Ṡ contains −(2α/κ)S², so large costates leave the cone before s = 1.
        let eta = cotangent(d, &mut r);
        let eta = eta.scaled(0.2 / eta.norm_squared().sqrt());
        let (alpha, beta) = (r.random_range(0.1..1.5), r.random_range(0.1..1.5));
        let path = integrate_geodesic(alpha, beta, &GeodesicState::new(&p, eta)?, 1e-3, 1000, normalized)?;
        let h0 = hamiltonian(alpha, beta, &path[0], normalized)?;
        for st in &path {
            drift = drift.max((hamiltonian(alpha, beta, st, normalized)? - h0).abs() / h0.max(1.0));
        }
    }
    let mut out = Outcome { passed: worst <= 1e-4 && drift <= 1e-8, ..Default::default() };
    out.detail = format!(
        "Hessian vs geodesic curvature: max relative error {worst:.2e} on 100 states (tol 1e-4); Hamiltonian drift {drift:.2e} over s in [0,1] (tol 1e-8)"
    );
    out.metric("hessian_max_rel_err", worst);
    out.metric("hamiltonian_drift", drift);
    Ok(out)
}

pub fn convexity_dichotomy(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 5));
    let mut margin = f64::INFINITY;
    let mut samples = 0;
    for _ in 0..2 {
        let d = r.random_range(1..=3);
        let t = prob_target(d, 0.8, &mut r);
        let alpha = r.random_range(0.3..2.0);
        let rep = convexity_scan(alpha, 0.0, &t, &ScanSampler::default(), 5000, r.random())?;
        let bound = alpha * linalg::min_eigenvalue(t.precision());
        margin = margin.min(rep.min_quotient - bound);
        samples += rep.n_samples;
    }

    // Moving the mean away from the target along −g makes the quotient fall linearly.
    let mut witnesses_ok = 0;
    let mut worst_last = f64::NEG_INFINITY;
    let n_witness = 10;
    for _ in 0..n_witness {
        let d = r.random_range(1..=3);
        let t: GaussianTarget<f64> = prob_target(d, 0.7, &mut r);
        let sigma = spd(d, 0.7, &mut r);
        let eta = unit_shape_cotangent(d, &mut r);
        let (alpha, beta) = (r.random_range(0.0..2.0), r.random_range(0.2..2.0));
        let q = non_convexity_witness(alpha, beta, &t, &sigma, &eta, &[1.0, 10.0, 100.0])?;
        worst_last = worst_last.max(q[2]);
        if q[0] > q[1] && q[1] > q[2] && q[2] < -10.0 {
            witnesses_ok += 1;
        }
    }
    let passed = margin >= -1e-6 && witnesses_ok == n_witness;
    let mut out = Outcome { passed, ..Default::default() };
    out.detail = format!(
        "transport-only: min quotient − α ν_min(Γ⁻¹) = {margin:.3e} over {samples} samples (≥ −1e-6); reaction witnesses decreasing and below −10: {witnesses_ok}/{n_witness} (largest final quotient {worst_last:.1})"
    );
    out.metric("transport_margin", margin);
    out.metric("witnesses_ok", witnesses_ok as f64);
    out.metric("largest_final_quotient", worst_last);
    Ok(out)
}
