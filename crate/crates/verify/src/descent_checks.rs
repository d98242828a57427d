//! The sampled descent on a Gaussian target and on a logistic posterior.

use hkgf::decay::sublevel_minimizer_check;
use hkgf::descent::{
    compare_geometries, run_descent, DescentConfig, EstimatorConfig, LogisticData, LogisticPotential, MomentEstimator,
    QuadraticPotential,
};
use hkgf::flow::{integrate, FlowConfig, GaussianFlow, MassDynamics};
use hkgf::{gauss, GaussianTarget, Mat, ScaledGaussian, Vector};

use crate::map::{damped_newton_map, LogisticOracle};
use crate::sample::*;
use crate::{seed_for, Outcome, VerifyOptions};

fn shape_distance(a: &ScaledGaussian<f64>, b: &ScaledGaussian<f64>) -> f64 {
    (a.sigma() - b.sigma()).norm() + (a.mean() - b.mean()).norm()
}

pub fn descent_gaussian(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let mut r = rng(seed_for(opts, 11));
    let t = prob_target(2, 0.7, &mut r);
    let p0 = ScaledGaussian::normalized(spd(2, 0.7, &mut r), gauss_vec(2, &mut r))?;
    let pot = QuadraticPotential::new(t.clone());

    // Convergence with exact moments at τ = 1e-3.
    let res = run_descent(&DescentConfig::new(1.0, 1.0, 1e-3, 20_000), &p0, &pot)?;
    let hit = res.records.iter().find(|rec| rec.kl_estimate <= 1e-6).map(|rec| rec.k);

    // Global error against an RK4 reference at t = 1 as τ halves.
    let mut flow = GaussianFlow::new(1.0, 1.0, t.clone(), MassDynamics::Normalized);
    let reference = integrate(&mut flow, &p0, &FlowConfig::new(1.0, 1.0, 1e-4, 1.0))?;
    let mut errs = Vec::new();
    for tau in [4e-3, 2e-3, 1e-3] {
        let n = (1.0 / tau as f64).round() as usize;
        let run = run_descent(&DescentConfig::new(1.0, 1.0, tau, n), &p0, &pot)?;
        errs.push(shape_distance(&run.final_point, reference.last()));
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.iter().cloned().fold(f64::INFINITY, f64::min);

    // Transport against reaction from a far, narrow start: the mean error
    // dominates early, where transport moves it at a rate independent of Σ.
    let far = GaussianTarget::probability(Mat::from_diagonal(&Vector::from_vec(vec![4.0, 1.0])), Vector::zeros(2))?;
    let start = ScaledGaussian::normalized(Mat::identity(2, 2) * 0.05, Vector::from_vec(vec![4.0, 4.0]))?;
    let e_start = gauss::shape_relative_entropy(&start, &far)?;
    let mut cfg = DescentConfig::new(1.0, 1.0, 1e-3, 10_000);
    cfg.record_every = 50;
    let cmp = compare_geometries(&cfg, &start, &QuadraticPotential::new(far))?;
    let at = |k: usize| cmp.k.iter().position(|&x| x == k).expect("checkpoint on the record grid");
    let (early, late) = (at(500), at(10_000));
    let bw_early = cmp.kl_bw[early] < cmp.kl_fr[early];
    let fr_late = cmp.kl_fr[late] < cmp.kl_bw[late];

    let passed = hit.is_some() && order >= 0.9 && e_start >= 10.0 && bw_early && fr_late;
    let mut out = Outcome { passed, ..Default::default() };
    out.detail = format!(
        "KL ≤ 1e-6 at step {}; observed order {order:.3} (errors {:.2e}, {:.2e}, {:.2e}; need ≥ 0.9); \
         start energy {e_start:.1}: KL at k=500 BW {:.3e} vs FR {:.3e}, at k=10000 FR {:.3e} vs BW {:.3e}",
        hit.map_or("never".to_string(), |k| k.to_string()),
        errs[0],
        errs[1],
        errs[2],
        cmp.kl_bw[early],
        cmp.kl_fr[early],
        cmp.kl_fr[late],
        cmp.kl_bw[late],
    );
    out.metric("steps_to_1e-6", hit.map_or(f64::NAN, |k| k as f64));
    out.metric("order", order);
    out.metric("start_energy", e_start);
    out.metric("bw_early_kl", cmp.kl_bw[early]);
    out.metric("fr_early_kl", cmp.kl_fr[early]);
    out.metric("bw_late_kl", cmp.kl_bw[late]);
    out.metric("fr_late_kl", cmp.kl_fr[late]);
    Ok(out)
}

pub fn logistic_map(opts: &VerifyOptions) -> hkgf::Result<Outcome> {
    let start = std::time::Instant::now();
    let seed = seed_for(opts, 12);
    let n = 200;
    let data = LogisticData::synthetic(n, &[1.5, -1.0], 0.0, seed)?;
    // λ = 1/N turns V into the plain negative log-likelihood.
    let lambda = 1.0 / n as f64;
    let oracle = LogisticOracle::new(&data.features, &data.labels, lambda, false, 0.0);
    let (map, gnorm) = damped_newton_map(&oracle, 1e-12, 100)
        .ok_or_else(|| hkgf::Error::Numerical("damped Newton did not converge".into()))?;
    let pot = LogisticPotential::new(data, lambda, false, 0.0)?;

    let mut cfg = DescentConfig::new(1.0, 1.0, 2e-3, 20_000);
    cfg.estimator = EstimatorConfig::MonteCarlo { n_mc: 8, antithetic: true };
    cfg.seed = seed;
    cfg.tail_fraction = 0.5;
    cfg.record_every = 100;
    let p0 = ScaledGaussian::normalized(Mat::identity(2, 2) * 0.1, Vector::zeros(2))?;
    let res = run_descent(&cfg, &p0, &pot)?;
    let avg = &res.polyak;
    let se = &avg.mean_stderr;
    let z: Vec<f64> = (0..2).map(|i| (avg.mean[i] - map[i]).abs() / se[i]).collect();
    let z_max = z.iter().cloned().fold(0.0, f64::max);
    let post_sd: Vec<f64> = (0..2).map(|i| avg.sigma[(i, i)].sqrt()).collect();
    let bias_sd = (0..2).map(|i| (avg.mean[i] - map[i]).abs() / post_sd[i]).fold(0.0, f64::max);

    let candidate = ScaledGaussian::normalized(avg.sigma.clone(), avg.mean.clone())?;
    let mut est = MomentEstimator::monte_carlo(100_000, true, seed ^ 0x5EED);
    let resid = sublevel_minimizer_check(&pot, &candidate, &mut est)?;

    // Diagnostic: the Gaussian stationary point itself, from deterministic
    // quadrature instead of sampling, refined from the averaged iterate.
    let mut det = DescentConfig::new(1.0, 1.0, 2e-3, 3000);
    det.estimator = EstimatorConfig::GaussHermite { nodes_per_dim: 12 };
    let vi = run_descent(&det, &candidate, &pot)?.final_point;
    let vi_resid = sublevel_minimizer_check(&pot, &vi, &mut MomentEstimator::gauss_hermite(12))?.max_whitened();
    let z_vi = (0..2).map(|i| (avg.mean[i] - vi.mean()[i]).abs() / se[i]).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();

    let passed = z_max <= 2.0 && resid.max_whitened() < 1e-2 && secs < 60.0;
    let mut out = Outcome { passed, ..Default::default() };
    out.detail = format!(
        "descent mean vs MAP: {z_max:.1} standard errors (limit 2; bias {bias_sd:.3} posterior sd, SE {:.1e}/{:.1e}); \
         stationarity residuals {:.2e} (limit 1e-2); \
         mean vs quadrature stationary point {z_vi:.1} SE (its residual {vi_resid:.1e}); Newton |∇V| {gnorm:.1e}; {secs:.1}s",
        se[0],
        se[1],
        resid.max_whitened()
    );
    out.metric("map_z_max", z_max);
    out.metric("bias_in_posterior_sd", bias_sd);
    out.metric("stationary_point_z_max", z_vi);
    out.metric("stationary_point_residual", vi_resid);
    out.metric("residual_precision", resid.precision_whitened);
    out.metric("residual_gradient", resid.gradient_whitened);
    out.metric("seconds", secs);
    Ok(out)
}

