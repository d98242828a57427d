//! Dissipation, Polyak–Łojasiewicz constants and decay-rate verification.

use serde::{Deserialize, Serialize};

use crate::descent::{MomentEstimator, Potential};
use crate::error::{Error, Result};
use crate::flow::{MassDynamics, Trajectory};
use crate::gauss::{self, GaussianTarget, ScaledGaussian};
use crate::linalg::{self, Mat, Vector};
use crate::onsager::validate_weights;
use crate::scalar::{lit, Scalar};

/// Dissipation split into covariance, mean and mass parts.
///
/// For probability measures the dissipation is `d_cov + d_mean`; with a
/// varying mass it is `kappa * (d_cov + d_mean) + d_mass`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DissipationSplit<T: Scalar> {
    pub d_cov: T,
    pub d_mean: T,
    pub d_mass: T,
}

impl<T: Scalar> DissipationSplit<T> {
    pub fn shape(&self) -> T {
        self.d_cov + self.d_mean
    }

    pub fn total(&self, kappa: T) -> T {
        kappa * self.shape() + self.d_mass
    }
}

/// Shape dissipation with `prec` standing in for Γ⁻¹ and `g` for Γ⁻¹(m − n).
pub fn dissipation_from_moments<T: Scalar>(
    alpha: T,
    beta: T,
    sigma: &Mat<T>,
    sigma_inv: &Mat<T>,
    prec: &Mat<T>,
    g: &Vector<T>,
) -> DissipationSplit<T> {
    let d = sigma.nrows();
    let m = prec * sigma - Mat::<T>::identity(d, d);
    // (Γ⁻¹Σ − I)²Σ⁻¹ = (Γ⁻¹Σ − I)(Γ⁻¹ − Σ⁻¹).
    let otto = (&m * (prec - sigma_inv)).trace();
    let she = (&m * &m).trace();
    let d_cov = alpha * otto + beta * lit::<T>(0.5) * she;
    let d_mean = alpha * g.norm_squared() + beta * g.dot(&(sigma * g));
    DissipationSplit { d_cov, d_mean, d_mass: T::zero() }
}

pub fn dissipation_split<T: Scalar>(
    alpha: T,
    beta: T,
    p: &ScaledGaussian<T>,
    target: &GaussianTarget<T>,
    mass: MassDynamics,
) -> Result<DissipationSplit<T>> {
    validate_weights(alpha, beta)?;
    target.check_dim(p.dim())?;
    let g = target.precision() * (p.mean() - target.mean());
    let mut out = dissipation_from_moments(alpha, beta, p.sigma(), &p.precision()?, target.precision(), &g);
    if mass == MassDynamics::Scaled {
        let k = gauss::shape_relative_entropy(p, target)? + (p.kappa() / target.varkappa()).ln();
        out.d_mass = beta * p.kappa() * k * k;
    }
    Ok(out)
}

/// (√y − 1/√y)² = (y − 1)²/y.
pub fn zeta<T: Scalar>(y: T) -> T {
    let e = y - T::one();
    e * (e / y)
}

/// ζ(y)/φ(y), continuous through y = 1 where it equals 2.
pub fn zeta_over_phi<T: Scalar>(y: T) -> T {
    let e = y - T::one();
    if e.abs() < lit(1e-3) {
        // φ(1+e)/e² = ½ − e/3 + e²/4 − …
        let mut acc = T::zero();
        let mut pow = T::one();
        for k in 2..=9 {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            acc += sign * pow / T::from_usize_lossy(k);
            pow *= e;
        }
        T::one() / (y * acc)
    } else {
        zeta(y) / gauss::phi(y)
    }
}

/// H(δ, β; y) = (δ + βy) ζ(y)/φ(y).
pub fn h_aux<T: Scalar>(delta: T, beta: T, y: T) -> Result<T> {
    if !(y > T::zero()) || !y.is_finite() {
        return Err(Error::domain(format!("H(delta, beta; y) needs y > 0, got {y}")));
    }
    Ok((delta + beta * y) * zeta_over_phi(y))
}

/// Open interval (lo, hi) with 0 ≤ lo < hi ≤ ∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn positive_axis() -> Self {
        Interval { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo >= 0.0) || !(self.hi > self.lo) || self.lo.is_infinite() {
            return Err(Error::domain(format!("need 0 <= lo < hi <= inf, got ({}, {})", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// J_E = (e^{−(1+2E)}, 1 + ln 4 + 4E): where the eigenvalues of Γ^{-1/2}ΣΓ^{-1/2}
/// live on the sublevel {𝖤₁ ≤ E}.
pub fn sublevel_interval(energy: f64) -> Interval {
    Interval { lo: (-(1.0 + 2.0 * energy)).exp(), hi: 1.0 + 4f64.ln() + 4.0 * energy }
}

/// lim H(δ, β; y) as y approaches an endpoint of (0, ∞), or its value inside.
fn h_at_endpoint(delta: f64, beta: f64, y: f64) -> f64 {
    if y == 0.0 {
        // ζ/φ ~ 1/(y ln(1/y)), so only the β·y term survives.
        if delta > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else if y.is_infinite() {
        // ζ/φ → 1 while yζ/φ → ∞.
        if beta > 0.0 {
            f64::INFINITY
        } else {
            delta
        }
    } else {
        (delta + beta * y) * zeta_over_phi(y)
    }
}

/// Endpoint decomposition δ·h(1,0;J) + β·h(0,1;J): exact when δβ = 0 and a
/// lower bound for the infimum otherwise, since ζ/φ decreases and yζ/φ increases.
pub fn h_endpoint_bound(delta: f64, beta: f64, j: Interval) -> Result<f64> {
    j.validate()?;
    let mut out = 0.0;
    if delta > 0.0 {
        out += delta * h_at_endpoint(1.0, 0.0, j.hi);
    }
    if beta > 0.0 {
        out += beta * h_at_endpoint(0.0, 1.0, j.lo);
    }
    Ok(out)
}

/// h(δ, β; J) = inf_{y∈J} H(δ, β; y), by a logarithmic scan refined with
/// golden-section search, together with the endpoint limits.
pub fn h_inf(delta: f64, beta: f64, j: Interval) -> Result<f64> {
    j.validate()?;
    if !(delta >= 0.0 && beta >= 0.0) {
        return Err(Error::domain("delta and beta must be non-negative"));
    }
    if delta == 0.0 || beta == 0.0 {
        return h_endpoint_bound(delta, beta, j);
    }
    let lo = j.lo.max(1e-300);
    let hi = if j.hi.is_finite() { j.hi } else { 1e300 };
    let (llo, lhi) = (lo.ln(), hi.ln());
    let f = |s: f64| h_at_endpoint(delta, beta, s.exp());
    let n = 4000;
    let step = (lhi - llo) / n as f64;
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..=n {
        let v = f(llo + step * i as f64);
        if v < best.0 {
            best = (v, i);
        }
    }
    let mut a = llo + step * best.1.saturating_sub(1) as f64;
    let mut b = (llo + step * (best.1 + 1) as f64).min(lhi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    let interior = best.0.min(fc).min(fd);
    let ends = h_at_endpoint(delta, beta, j.lo).min(h_at_endpoint(delta, beta, j.hi));
    Ok(interior.min(ends))
}

/// α_Γ = α ν_min(Γ⁻¹).
pub fn alpha_gamma<T: Scalar>(alpha: T, target: &GaussianTarget<T>) -> T {
    alpha * linalg::min_eigenvalue(target.precision())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlConstants {
    pub c_cov: f64,
    pub c_mean: f64,
}

impl PlConstants {
    pub fn combined(&self) -> f64 {
        self.c_cov.min(self.c_mean)
    }
}

/// PL constants, global when `energy` is `None` and on the sublevel {𝖤₁ ≤ E} otherwise.
pub fn pl_constants<T: Scalar>(alpha: T, beta: T, target: &GaussianTarget<T>, energy: Option<f64>) -> Result<PlConstants> {
    validate_weights(alpha, beta)?;
    let ag = alpha_gamma(alpha, target).to_f64_lossy();
    let b = beta.to_f64_lossy();
    match energy {
        None => {
            let c_cov = if b == 0.0 {
                2.0 * ag
            } else if ag == 0.0 {
                0.0
            } else {
                h_inf(2.0 * ag, b, Interval::positive_axis())?
            };
            Ok(PlConstants { c_cov, c_mean: 2.0 * ag })
        }
        Some(e) => {
            if !(e > 0.0) {
                return Err(Error::domain(format!("sublevel energy must be positive, got {e}")));
            }
            let j = sublevel_interval(e);
            let c_cov = 2.0 * ag * h_endpoint_bound(1.0, 0.0, j)? + b * h_endpoint_bound(0.0, 1.0, j)?;
            Ok(PlConstants { c_cov, c_mean: 2.0 * ag + 2.0 * b * j.lo })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelPl {
    pub energy: f64,
    pub c_cov: f64,
    pub c_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRates {
    pub nu_cov: f64,
    pub nu_mean: f64,
    pub prefactor_cov: f64,
    pub prefactor_mean: f64,
    /// Global PL constants.
    pub c_pl_cov: f64,
    pub c_pl_mean: f64,
    pub sublevel: Option<SublevelPl>,
    pub gamma_loglambda: Option<f64>,
}

/// Eigenvalue-based rates. The mean prefactor uses the exponent −2β/ν_cov,
/// which is what integrating the eigenvalue lower bound yields.
pub fn refined_rates<T: Scalar>(alpha: T, beta: T, target: &GaussianTarget<T>, b_min0: f64) -> Result<DecayRates> {
    validate_weights(alpha, beta)?;
    if !(b_min0 > 0.0) {
        return Err(Error::domain(format!("b_min0 must be positive, got {b_min0}")));
    }
    let ag = alpha_gamma(alpha, target).to_f64_lossy();
    let b = beta.to_f64_lossy();
    let nu_cov = 2.0 * ag + b;
    let nu_mean = 2.0 * (ag + b);
    let base = b_min0.min(1.0);
    let pl = pl_constants(alpha, beta, target, None)?;
    Ok(DecayRates {
        nu_cov,
        nu_mean,
        prefactor_cov: base.powf(-b / nu_cov),
        prefactor_mean: base.powf(-2.0 * b / nu_cov),
        c_pl_cov: pl.c_cov,
        c_pl_mean: pl.c_mean,
        sublevel: None,
        gamma_loglambda: None,
    })
}

/// Smallest eigenvalue of Γ^{-1/2} Σ Γ^{-1/2}.
pub fn b_min<T: Scalar>(sigma: &Mat<T>, target: &GaussianTarget<T>) -> T {
    linalg::min_eigenvalue(&target.whiten(sigma))
}

/// All rates for a Gaussian-target run from `p0`, including sublevel constants at 𝖤₁(p0).
pub fn rates_for_start<T: Scalar>(alpha: T, beta: T, target: &GaussianTarget<T>, p0: &ScaledGaussian<T>) -> Result<DecayRates> {
    let mut r = refined_rates(alpha, beta, target, b_min(p0.sigma(), target).to_f64_lossy())?;
    let e0 = gauss::shape_relative_entropy(p0, target)?.to_f64_lossy();
    if e0 > 0.0 {
        let pl = pl_constants(alpha, beta, target, Some(e0))?;
        r.sublevel = Some(SublevelPl { energy: e0, c_cov: pl.c_cov, c_mean: pl.c_mean });
    }
    Ok(r)
}

/// γ = λ(2α + β σ_min), with σ_min a certified lower bound on the covariance
/// eigenvalues along the run.
pub fn log_lambda_rate(alpha: f64, beta: f64, lambda: f64, sigma_min: f64) -> f64 {
    lambda * (2.0 * alpha + beta * sigma_min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DecayMode {
    PlGlobal,
    PlSublevel,
    Refined,
    LogLambda { inf_energy: f64 },
}

/// Absolute slack allowed between a trajectory and its bound.
pub const DECAY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub mode: DecayMode,
    pub vacuous: bool,
    pub max_violation: f64,
    pub violations: usize,
    /// −d/dt ln 𝖤₁ on the tail half.
    pub fitted_energy_rate: Option<f64>,
    /// −d/dt ln ‖Σ − Γ‖_F on the tail half.
    pub fitted_cov_rate: Option<f64>,
    /// −d/dt ln 𝖧_m on the tail half.
    pub fitted_mean_rate: Option<f64>,
    pub rates: DecayRates,
    pub pass: bool,
}

/// Least-squares slope of −ln v against t over the tail half, skipping values
/// at or below `floor`.
pub fn fit_log_rate(times: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let start = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(_, v)| **v > floor && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    Some(-sxy / sxx)
}

/// Checks a recorded trajectory against the chosen decay bound.
pub fn verify_decay<T: Scalar>(traj: &Trajectory<T>, target: &GaussianTarget<T>, rates: &DecayRates, mode: DecayMode) -> Result<DecayReport> {
    if traj.is_empty() {
        return Err(Error::domain("empty trajectory"));
    }
    let eps = f64::EPSILON;
    let times: Vec<f64> = traj.times.iter().map(|t| t.to_f64_lossy()).collect();
    let h_cov: Vec<f64> = traj.energy.iter().map(|e| e.h_cov.to_f64_lossy()).collect();
    let h_mean: Vec<f64> = traj.energy.iter().map(|e| e.h_mean.to_f64_lossy()).collect();
    let e1: Vec<f64> = h_cov.iter().zip(&h_mean).map(|(a, b)| a + b).collect();
    let dev: Vec<f64> = traj.points.iter().map(|p| (p.sigma() - target.gamma()).norm().to_f64_lossy()).collect();
    let gamma_scale = 1.0 + target.gamma().norm().to_f64_lossy();

    let floor = 1e2 * eps;
    let fitted_energy_rate = fit_log_rate(&times, &e1, floor);
    let fitted_cov_rate = fit_log_rate(&times, &dev, 1e4 * eps * gamma_scale);
    let fitted_mean_rate = fit_log_rate(&times, &h_mean, floor);

    let vacuous = e1[0] <= floor;
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut check = |actual: f64, bound: f64| {
        let v = actual - bound;
        max_violation = max_violation.max(v);
        if v > DECAY_SLACK {
            violations += 1;
        }
    };
    if !vacuous {
        match mode {
            DecayMode::Refined => {
                for (i, &t) in times.iter().enumerate() {
                    check(h_cov[i], rates.prefactor_cov * (-rates.nu_cov * t).exp() * h_cov[0]);
                    check(h_mean[i], rates.prefactor_mean * (-rates.nu_mean * t).exp() * h_mean[0]);
                }
            }
            DecayMode::PlGlobal | DecayMode::PlSublevel => {
                let (cc, cm) = if mode == DecayMode::PlGlobal {
                    (rates.c_pl_cov, rates.c_pl_mean)
                } else {
                    let s = rates
                        .sublevel
                        .ok_or_else(|| Error::config("sublevel PL check needs sublevel constants"))?;
                    if s.energy + 1e-12 < e1[0] {
                        return Err(Error::config(format!(
                            "sublevel energy {} is below the initial energy {}",
                            s.energy, e1[0]
                        )));
                    }
                    (s.c_cov, s.c_mean)
                };
                for (i, &t) in times.iter().enumerate() {
                    check(h_cov[i], (-cc * t).exp() * h_cov[0]);
                    check(h_mean[i], (-cm * t).exp() * h_mean[0]);
                }
            }
            DecayMode::LogLambda { inf_energy } => {
                let gamma = rates
                    .gamma_loglambda
                    .ok_or_else(|| Error::config("log-lambda check needs gamma_loglambda"))?;
                for (i, &t) in times.iter().enumerate() {
                    check(e1[i] - inf_energy, (-gamma * t).exp() * (e1[0] - inf_energy));
                }
            }
        }
    }
    if max_violation == f64::NEG_INFINITY {
        max_violation = 0.0;
    }
    Ok(DecayReport {
        mode,
        vacuous,
        max_violation,
        violations,
        fitted_energy_rate,
        fitted_cov_rate,
        fitted_mean_rate,
        rates: *rates,
        pass: vacuous || violations == 0,
    })
}

/// Residuals of the stationarity system Σ⁻¹ = E[∇²V], 0 = E[∇V] under N(m, Σ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinimizerResiduals {
    /// ‖Σ^{1/2} E[∇²V] Σ^{1/2} − I‖_F, invariant under affine reparametrization.
    pub precision_whitened: f64,
    /// |Σ^{1/2} E[∇V]|.
    pub gradient_whitened: f64,
    /// ‖E[∇²V] − Σ⁻¹‖_F.
    pub precision_raw: f64,
    /// |E[∇V]|.
    pub gradient_raw: f64,
}

impl MinimizerResiduals {
    pub fn max_whitened(&self) -> f64 {
        self.precision_whitened.max(self.gradient_whitened)
    }
}

pub fn sublevel_minimizer_check<T: Scalar>(
    potential: &dyn Potential<T>,
    candidate: &ScaledGaussian<T>,
    estimator: &mut MomentEstimator<T>,
) -> Result<MinimizerResiduals> {
    if potential.dim() != candidate.dim() {
        return Err(Error::dim("potential and candidate dimensions differ"));
    }
    let mom = estimator.estimate(potential, candidate.sigma(), candidate.mean())?;
    let root = linalg::sqrt_spd(candidate.sigma());
    let d = candidate.dim();
    let whitened = &root * &mom.e_hess * &root - Mat::<T>::identity(d, d);
    Ok(MinimizerResiduals {
        precision_whitened: whitened.norm().to_f64_lossy(),
        gradient_whitened: (&root * &mom.e_grad).norm().to_f64_lossy(),
        precision_raw: (&mom.e_hess - candidate.precision()?).norm().to_f64_lossy(),
        gradient_raw: mom.e_grad.norm().to_f64_lossy(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayJson {
    pub alpha: f64,
    pub beta: f64,
    pub rates: DecayRates,
    pub reports: Vec<DecayReport>,
}
