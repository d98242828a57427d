//! PL inequalities, refined decay rates and the eigenvalue picture.

use rand::Rng;

use hkgf::decay::{
    dissipation_split, pl_constants, rates_for_start, refined_rates, sublevel_interval, verify_decay, DecayMode,
};
use hkgf::flow::{eigen_envelope, integrate, rhs_eigen, FlowConfig, GaussianFlow, MassDynamics};
use hkgf::{gauss, linalg, GaussianTarget, Mat, ScaledGaussian, Vector};

use crate::sample::*;
use crate::{seed_for, Outcome, VerifyOptions};

/// Rejection sample from {𝖤₁ ≤ E}: whitened eigenvalues log-uniform on the
/// sublevel interval, mean uniform in a whitened ball of the maximal radius.
fn sublevel_sample(t: &GaussianTarget<f64>, energy: f64, r: &mut Rng8) -> hkgf::Result<ScaledGaussian<f64>> {
    let d = t.dim();
    let root = linalg::sqrt_spd(t.gamma());
    let j = sublevel_interval(energy);
    loop {
        let q = orthogonal(d, r);
        let eig = Vector::from_fn(d, |_, _| r.random_range(j.lo.ln()..j.hi.ln()).exp());
        let s = sandwich(t.gamma(), &with_spectrum(&q, &eig));
        let radius = (2.0 * energy).sqrt() * r.random::<f64>();
        let m = t.mean() + &root * gauss_vec(d, r).normalize() * radius;
        let p = ScaledGaussian::normalized(s, m)?;
        if gauss::shape_relative_entropy(&p, t)? <= energy {
            return Ok(p);
        }
    }
}

pub fn pl_sublevel(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 6));
    let regimes = [(1.0, 0.0), (0.0, 1.0), (0.7, 0.9)];
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut total = 0usize;
    for &(alpha, beta) in &regimes {
        for energy in [0.5, 2.0, 10.0] {
            let d = r.random_range(1..=3);
            let t = prob_target(d, 0.8, &mut r);
            let c = pl_constants(alpha, beta, &t, Some(energy))?;
            let (c_cov, c_mean) = (c.c_cov * opts.rate_scale, c.c_mean * opts.rate_scale);
            for _ in 0..10_000 {
                let p = sublevel_sample(&t, energy, &mut r)?;
                let e = gauss::entropy_split(&p, &t)?;
                let dsp = dissipation_split(alpha, beta, &p, &t, MassDynamics::Normalized)?;
                for gap in [
                    c_cov * e.h_cov - dsp.d_cov,
                    c_mean * e.h_mean - dsp.d_mean,
                    c_cov.min(c_mean) * e.shape() - dsp.shape(),
                ] {
                    worst = worst.max(gap);
                    if gap > 1e-12 {
                        violations += 1;
                    }
                }
                total += 1;
            }
        }
    }
    let mut out = Outcome { passed: violations == 0, ..Default::default() };
    out.detail = format!(
        "{violations} violations over {total} samples (3 regimes incl. α_Γ = 0, E in {{0.5, 2, 10}}); largest c·𝖤 − 𝒟 = {worst:.2e} (slack 1e-12)"
    );
    out.metric("violations", violations as f64);
    out.metric("max_excess", worst);
    Ok(out)
}

struct DecayRun {
    alpha: f64,
    beta: f64,
    target: GaussianTarget<f64>,
    p0: ScaledGaussian<f64>,
}

fn decay_run(d: usize, r: &mut Rng8) -> hkgf::Result<DecayRun> {
    let target = prob_target(d, 0.8, r);
    let p0 = ScaledGaussian::normalized(
        sandwich(target.gamma(), &spd(d, 1.2, r)),
        target.mean() + gauss_vec(d, r) * 1.5,
    )?;
    Ok(DecayRun { alpha: r.random_range(0.2..1.5), beta: r.random_range(0.0..1.5), target, p0 })
}

/// Step size well inside the RK4 stability region for the initial rates.
fn stable_dt(run: &DecayRun) -> f64 {
    let b = linalg::max_eigenvalue(&run.target.whiten(run.p0.sigma()));
    let stiff = 2.0 * run.alpha * linalg::max_eigenvalue(run.target.precision()) + run.beta * (1.0 + 2.0 * b);
    (0.3 / stiff).min(1e-2)
}

pub fn refined_decay(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let start = std::time::Instant::now();
    let mut r = rng(seed_for(opts, 7));
    let n_runs = 50;
    let (mut bound_fail, mut rate_fail) = (0, 0);
    let (mut lo_ratio, mut hi_ratio) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut worst_violation = f64::NEG_INFINITY;
    for i in 0..n_runs {
        let run = decay_run(1 + i % 5, &mut r)?;
        let mut rates = rates_for_start(run.alpha, run.beta, &run.target, &run.p0)?;
        rates.nu_cov *= opts.rate_scale;
        rates.nu_mean *= opts.rate_scale;
        let dt = stable_dt(&run);
        let t_end = 25.0 / rates.nu_cov.max(1e-3);
        let mut cfg = FlowConfig::new(run.alpha, run.beta, dt, t_end);
        cfg.record_every = ((t_end / dt) as usize / 2000).max(1);
        let mut flow = GaussianFlow::new(run.alpha, run.beta, run.target.clone(), MassDynamics::Normalized);
        let traj = integrate(&mut flow, &run.p0, &cfg)?;
        let rep = verify_decay(&traj, &run.target, &rates, DecayMode::Refined)?;
        worst_violation = worst_violation.max(rep.max_violation);
        if !rep.pass {
            bound_fail += 1;
        }
        match rep.fitted_cov_rate {
            Some(fit) => {
                let ratio = fit / rates.nu_cov;
                lo_ratio = lo_ratio.min(ratio);
                hi_ratio = hi_ratio.max(ratio);
                if !(0.95..=1.5).contains(&ratio) {
                    rate_fail += 1;
                }
            }
            None => rate_fail += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = bound_fail == 0 && rate_fail == 0 && secs < 30.0;
    let mut out = Outcome { passed, ..Default::default() };
    out.detail = format!(
        "{bound_fail}/{n_runs} runs break the pointwise bounds (largest excess {worst_violation:.2e}, slack 1e-9); fitted/ν_cov in [{lo_ratio:.3}, {hi_ratio:.3}] with {rate_fail} outside [0.95, 1.5]; {secs:.1}s (limit 30s)"
    );
    out.metric("bound_failures", bound_fail as f64);
    out.metric("rate_failures", rate_fail as f64);
    out.metric("min_rate_ratio", lo_ratio);
    out.metric("max_rate_ratio", hi_ratio);
    out.metric("seconds", secs);
    Ok(out)
}

/// Smallest gap between sorted eigenvalues.
fn min_gap(v: &Vector<f64>) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn sorted(v: &Vector<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s
}

/// RK4 for the pair (B, b): B follows its matrix ODE, b follows ḃᵢ = −rᵢ(bᵢ − 1)
/// with rᵢ taken from the eigenvectors of the current B.
fn hellmann_feynman_path(
    alpha: f64,
    beta: f64,
    target: &GaussianTarget<f64>,
    b0: &Mat<f64>,
    dt: f64,
    n: usize,
) -> hkgf::Result<Vec<Vec<f64>>> {
    let f = |b: &Mat<f64>, lam: &Vector<f64>| -> hkgf::Result<(Mat<f64>, Vector<f64>)> {
        let e = rhs_eigen(alpha, beta, b, target, 0.0)?;
        Ok((e.b_dot, Vector::from_fn(lam.len(), |i, _| -e.rates[i] * (lam[i] - 1.0))))
    };
    let mut b = b0.clone();
    let mut lam = Vector::from_vec(sorted(&linalg::sym_eigen(b0).0));
    let mut out = vec![lam.iter().copied().collect()];
    for _ in 0..n {
        let (k1b, k1l) = f(&b, &lam)?;
        let (k2b, k2l) = f(&(&b + &k1b * (dt / 2.0)), &(&lam + &k1l * (dt / 2.0)))?;
        let (k3b, k3l) = f(&(&b + &k2b * (dt / 2.0)), &(&lam + &k2l * (dt / 2.0)))?;
        let (k4b, k4l) = f(&(&b + &k3b * dt), &(&lam + &k3l * dt))?;
        b += (k1b + k2b * 2.0 + k3b * 2.0 + k4b) * (dt / 6.0);
        lam += (k1l + k2l * 2.0 + k3l * 2.0 + k4l) * (dt / 6.0);
        out.push(lam.iter().copied().collect());
    }
    Ok(out)
}

pub fn eigen_sandwich(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 13));
    let n_runs = 20;
    let (dt, t_end) = (1e-3, 3.0);
    let n = (t_end / dt) as usize;
    let mut envelope_violations = 0usize;
    let mut hf_err = 0.0f64;
    let mut smallest_gap = f64::INFINITY;
    for i in 0..n_runs {
        let d = 1 + i % 5;
        let target = prob_target(d, 0.8, &mut r);
        let eig0 = Vector::from_fn(d, |_, _| r.random_range(-1.5f64..1.5).exp());
        let b0 = with_spectrum(&orthogonal(d, &mut r), &eig0);
        let p0 = ScaledGaussian::normalized(sandwich(target.gamma(), &b0), gauss_vec(d, &mut r))?;
        let (alpha, beta) = (r.random_range(0.1..1.5), r.random_range(0.1..1.5));
        let mut cfg = FlowConfig::new(alpha, beta, dt, t_end);
        cfg.track_eigen = true;
        let mut flow = GaussianFlow::new(alpha, beta, target.clone(), MassDynamics::Normalized);
        let traj = integrate(&mut flow, &p0, &cfg)?;
        let eig = traj.eigen.as_ref().expect("eigenvalues were requested");
        let run_gap = if d > 1 { eig.iter().map(min_gap).fold(f64::INFINITY, f64::min) } else { f64::INFINITY };
        smallest_gap = smallest_gap.min(run_gap);
        let nu = refined_rates(alpha, beta, &target, 1.0)?.nu_cov * opts.rate_scale;
        for (time, b) in traj.times.iter().zip(eig) {
            for k in 0..d {
                let (lo, hi) = eigen_envelope(eig[0][k], nu, *time);
                if b[k] < lo * (1.0 - 1e-10) || b[k] > hi * (1.0 + 1e-10) {
                    envelope_violations += 1;
                }
            }
        }
        let hf = hellmann_feynman_path(alpha, beta, &target, &target.whiten_symmetric(p0.sigma()), dt, n)?;
        if hf.len() != eig.len() {
            return Err(hkgf::Error::Numerical("eigenvalue paths have different lengths".into()));
        }
        for (a, b) in hf.iter().zip(eig) {
            for (x, y) in a.iter().zip(sorted(b)) {
                hf_err = hf_err.max((x - y).abs() / y.abs().max(1.0));
            }
        }
    }
    let passed = envelope_violations == 0 && hf_err <= 1e-6;
    let mut out = Outcome { passed, ..Default::default() };
    out.detail = format!(
        "{envelope_violations} envelope violations on {n_runs} runs; Hellmann–Feynman vs matrix-ODE eigenvalues max error {hf_err:.2e} (tol 1e-6); smallest eigenvalue gap along the runs {smallest_gap:.2e}"
    );
    out.metric("envelope_violations", envelope_violations as f64);
    out.metric("hf_max_err", hf_err);
    out.metric("min_gap", smallest_gap);
    Ok(out)
}
