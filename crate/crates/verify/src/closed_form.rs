//! Checks against closed-form solutions of the reduced flow.

use rand::Rng;

use hkgf::flow::{explicit_a, explicit_kappa, integrate, integrate_simple, FlowConfig, GaussianFlow, MassDynamics};
use hkgf::{gauss, ScaledGaussian, SimpleCoords};

use crate::sample::*;
use crate::{seed_for, Outcome, VerifyOptions};

/// Weights cycling through reaction-only, transport-only and mixed runs.
fn weights(i: usize, r: &mut Rng8) -> (f64, f64) {
    match i % 4 {
        0 => (0.0, r.random_range(0.2..2.0)),
        1 => (r.random_range(0.2..2.0), 0.0),
        _ => (r.random_range(0.1..2.0), r.random_range(0.1..2.0)),
    }
}

pub fn closed_form_precision(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 1));
    let start = std::time::Instant::now();
    let dims = [1, 2, 3, 5];
    let mut worst = 0.0f64;
    for i in 0..20 {
        let d = dims[i % dims.len()];
        let (alpha, beta) = weights(i, &mut r);
        let a0 = spd(d, 1.0, &mut r);
        let a_bar = spd(d, 1.0, &mut r);
        let q0 = SimpleCoords::new(a0.clone(), gauss_vec(d, &mut r), 0.0)?;
        let q_bar = SimpleCoords::new(a_bar.clone(), gauss_vec(d, &mut r), 0.0)?;
        let mut cfg = FlowConfig::new(alpha, beta, 1e-3, 5.0);
        cfg.record_every = 50;
        let traj = integrate_simple(&q0, &q_bar, &cfg)?;
        for (t, q) in traj.times.iter().zip(&traj.points) {
            let (a, _) = explicit_a(*t, alpha, beta, &a0, &a_bar)?;
            worst = worst.max(mat_rel_err(&a, q.a()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut out = Outcome { passed: worst <= 1e-6 && secs < 5.0, ..Default::default() };
    out.detail = format!("max relative Frobenius error {worst:.2e} (tol 1e-6) over 20 configs in {secs:.2}s (limit 5s)");
    out.metric("max_rel_err", worst);
    out.metric("seconds", secs);
    Ok(out)
}

pub fn mass_closed_form(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 8));
    let mut worst = 0.0f64;
    let mut conserved = true;
    for i in 0..12 {
        let d = 1 + i % 4;
        let beta = if i % 3 == 0 { 0.0 } else { r.random_range(0.1..2.0) };
        let alpha = r.random_range(0.1..1.5);
        let t = target(d, &mut r);
        let p0 = point(d, &mut r);
        let mut flow = GaussianFlow::new(alpha, beta, t.clone(), MassDynamics::Scaled);
        let traj = integrate(&mut flow, &p0, &FlowConfig::new(alpha, beta, 1e-3, 3.0))?;
        let kappa = explicit_kappa(&traj, beta, &t)?;
        for (k, p) in kappa.iter().zip(&traj.points) {
            worst = worst.max(rel_err(*k, p.kappa()));
            if beta == 0.0 && p.kappa() != p0.kappa() {
                conserved = false;
            }
        }
    }
    let mut out = Outcome { passed: worst <= 1e-5 && conserved, ..Default::default() };
    out.detail = format!(
        "max relative mass error {worst:.2e} (tol 1e-5); zero reaction conserves mass exactly: {conserved}"
    );
    out.metric("max_rel_err", worst);
    out.metric("conserved", conserved as u8 as f64);
    Ok(out)
}

pub fn precision_contraction(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 9));
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for i in 0..40 {
        let d = 1 + i % 5;
        let alpha = if i % 4 == 0 { 0.0 } else { r.random_range(0.0..2.0) };
        let beta = r.random_range(0.05..2.0);
        let t = target(d, &mut r);
        // Starts far from equilibrium in both directions.
        let spread = if i % 2 == 0 { 2.5 } else { 1.0 };
        let p0 = ScaledGaussian::new(spd(d, spread, &mut r), gauss_vec(d, &mut r) * 3.0, 1.0)?;
        let q0 = gauss::to_simple(&p0)?;
        let q_bar = t.simple_coords()?;
        let mut cfg = FlowConfig::new(alpha, beta, 1e-3, 4.0);
        cfg.record_every = 10;
        let traj = integrate_simple(&q0, &q_bar, &cfg)?;
        let d0 = (q0.a() - q_bar.a()).norm_squared();
        for (time, q) in traj.times.iter().zip(&traj.points) {
            let bound = (-beta * time).exp() * d0;
            let excess = ((q.a() - q_bar.a()).norm_squared() - bound) / d0;
            worst = worst.max(excess);
            checked += 1;
        }
    }
    let passed = worst <= 1e-10;
    let mut out = Outcome { passed, ..Default::default() };
    out.detail = format!("{checked} time points on 40 runs; largest relative excess over the bound {worst:.2e} (slack 1e-10)");
    out.metric("max_relative_excess", worst);
    Ok(out)
}
