//! Metric Hessian of the relative entropy, geodesic equations, convexity
//! scanning and sublevel bounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ode::{rk4_step, OdeState};
use crate::gauss::{self, GaussianTarget, ScaledGaussian};
use crate::linalg::{self, Mat, Vector};
use crate::onsager::{self, validate_weights, Cotangent};
use crate::scalar::{lit, Scalar};

/// Point (Σ, m, κ) and costate (S, μ, k), unvalidated so it can serve as an ODE state.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicState<T: Scalar> {
    pub sigma: Mat<T>,
    pub m: Vector<T>,
    pub kappa: T,
    pub costate: Cotangent<T>,
}

impl<T: Scalar> GeodesicState<T> {
    pub fn new(point: &ScaledGaussian<T>, costate: Cotangent<T>) -> Result<Self> {
        if costate.dim() != point.dim() {
            return Err(Error::dim("point and costate dimensions differ"));
        }
        Ok(GeodesicState { sigma: point.sigma().clone(), m: point.mean().clone(), kappa: point.kappa(), costate })
    }

    pub fn point(&self) -> Result<ScaledGaussian<T>> {
        ScaledGaussian::new(self.sigma.clone(), self.m.clone(), self.kappa)
    }
}

impl<T: Scalar> OdeState<T> for GeodesicState<T> {
    type Deriv = GeodesicState<T>;
    fn advance(&self, h: T, d: &Self) -> Self {
        GeodesicState {
            sigma: &self.sigma + &d.sigma * h,
            m: &self.m + &d.m * h,
            kappa: self.kappa + d.kappa * h,
            costate: Cotangent {
                s: &self.costate.s + &d.costate.s * h,
                mu: &self.costate.mu + &d.costate.mu * h,
                k: self.costate.k + d.costate.k * h,
            },
        }
    }
}

/// Hamilton's equations for ½⟨ξ, Kξ⟩. With `normalized`, κ is frozen at 1 and k is ignored.
pub fn geodesic_rhs<T: Scalar>(alpha: T, beta: T, st: &GeodesicState<T>, normalized: bool) -> GeodesicState<T> {
    let (sigma, s, mu) = (&st.sigma, &st.costate.s, &st.costate.mu);
    let kappa = if normalized { T::one() } else { st.kappa };
    let inv_k = T::one() / kappa;
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    let ss = s * sigma;
    let d_sigma = (&ss + ss.transpose()) * (two * alpha * inv_k) + sigma * s * sigma * (two * beta * inv_k);
    let d_m = mu * (alpha * inv_k) + sigma * mu * (beta * inv_k);
    let d_s = -(s * s) * (two * alpha * inv_k) - (s * sigma * s * (two * inv_k) + mu * mu.transpose() * (half * inv_k)) * beta;
    let (d_kappa, d_k) = if normalized {
        (T::zero(), T::zero())
    } else {
        let inv_k2 = inv_k * inv_k;
        let tr_s2s = (s * &ss).trace();
        let tr_sss = ss.dot(&ss.transpose());
        let dk = alpha * inv_k2 * (two * tr_s2s + half * mu.norm_squared())
            + beta * half * inv_k2 * (mu.dot(&(sigma * mu)) + two * tr_sss)
            - half * beta * st.costate.k * st.costate.k;
        (beta * kappa * st.costate.k, dk)
    };
    GeodesicState {
        sigma: linalg::symmetrize(&d_sigma),
        m: d_m,
        kappa: d_kappa,
        costate: Cotangent { s: linalg::symmetrize(&d_s), mu: Vector::zeros(mu.len()), k: d_k },
    }
}

/// ½⟨ξ, K(q)ξ⟩.
pub fn hamiltonian<T: Scalar>(alpha: T, beta: T, st: &GeodesicState<T>, normalized: bool) -> Result<T> {
    let p = st.point()?;
    let q = if normalized {
        onsager::normalized_quadratic_form(alpha, beta, &p, &st.costate)?
    } else {
        onsager::quadratic_form(alpha, beta, &p, &st.costate)?
    };
    Ok(lit::<T>(0.5) * q)
}

/// Fixed-step RK4 along the geodesic; returns all `n_steps + 1` states.
pub fn integrate_geodesic<T: Scalar>(
    alpha: T,
    beta: T,
    start: &GeodesicState<T>,
    ds: T,
    n_steps: usize,
    normalized: bool,
) -> Result<Vec<GeodesicState<T>>> {
    validate_weights(alpha, beta)?;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(start.clone());
    let mut f = |s: &GeodesicState<T>| Ok(geodesic_rhs(alpha, beta, s, normalized));
    for _ in 0..n_steps {
        let next = rk4_step(out.last().expect("non-empty"), ds, &mut f)?;
        out.push(next);
    }
    Ok(out)
}

/// The three blocks of the metric Hessian on probability measures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct HessianBlocks<T: Scalar> {
    pub otto: T,
    pub mix: T,
    pub she: T,
}

impl<T: Scalar> HessianBlocks<T> {
    pub fn combine(&self, alpha: T, beta: T) -> T {
        alpha * alpha * self.otto + alpha * beta * self.mix + beta * beta * self.she
    }
}

pub fn hessian_blocks<T: Scalar>(p: &ScaledGaussian<T>, target: &GaussianTarget<T>, eta: &Cotangent<T>) -> Result<HessianBlocks<T>> {
    target.check_dim(p.dim())?;
    if eta.dim() != p.dim() {
        return Err(Error::dim("cotangent and point dimensions differ"));
    }
    let (sigma, s, mu) = (p.sigma(), &eta.s, &eta.mu);
    let gi = target.precision();
    let w = p.mean() - target.mean();
    let giw = gi * &w;
    let (two, four, half) = (lit::<T>(2.0), lit::<T>(4.0), lit::<T>(0.5));
    let ident = Mat::<T>::identity(p.dim(), p.dim());

    let otto = four * (s * gi * s * sigma).trace() + four * s.norm_squared() + mu.dot(&(gi * mu));

    let sss = sigma * s * sigma;
    let she = two * (s * sigma * s * sigma * gi * sigma).trace()
        + two * mu.dot(&(&sss * &giw))
        + half * mu.dot(&((sigma * gi * sigma + sigma) * mu));

    let s2 = s * s;
    let mix = four * (gi * sigma * s * sigma * s).trace()
        + two * (gi * sigma * &s2 * sigma).trace()
        + two * (&s2 * sigma).trace()
        + two * mu.dot(&((sigma * s + s * sigma) * &giw))
        + mu.dot(&((sigma * gi + ident) * mu));

    Ok(HessianBlocks { otto, mix, she })
}

/// ⟨η, Hess 𝖤₁(p) η⟩ on probability measures (κ is ignored).
pub fn hessian_form<T: Scalar>(alpha: T, beta: T, p: &ScaledGaussian<T>, target: &GaussianTarget<T>, eta: &Cotangent<T>) -> Result<T> {
    validate_weights(alpha, beta)?;
    Ok(hessian_blocks(p, target, eta)?.combine(alpha, beta))
}

/// Hessian over metric: ⟨η, Hess η⟩ / ⟨η, Kη⟩.
pub fn rayleigh_quotient<T: Scalar>(alpha: T, beta: T, p: &ScaledGaussian<T>, target: &GaussianTarget<T>, eta: &Cotangent<T>) -> Result<T> {
    let den = onsager::normalized_quadratic_form(alpha, beta, p, eta)?;
    if !(den > T::zero()) {
        return Err(Error::domain("Rayleigh quotient undefined for a null cotangent"));
    }
    Ok(hessian_form(alpha, beta, p, target, eta)? / den)
}

/// Second derivative of 𝖤₁ along the normalized geodesic through (p, η), by
/// central differences with RK4 steps of size ±ds.
pub fn energy_curvature_along_geodesic<T: Scalar>(
    alpha: T,
    beta: T,
    p: &ScaledGaussian<T>,
    target: &GaussianTarget<T>,
    eta: &Cotangent<T>,
    ds: T,
) -> Result<T> {
    let st = GeodesicState::new(&p.with_kappa(T::one())?, eta.clone())?;
    let mut f = |s: &GeodesicState<T>| Ok(geodesic_rhs(alpha, beta, s, true));
    let fwd = rk4_step(&st, ds, &mut f)?;
    let bwd = rk4_step(&st, -ds, &mut f)?;
    let e = |s: &GeodesicState<T>| -> Result<T> { gauss::shape_relative_entropy(&s.point()?, target) };
    Ok((e(&fwd)? - lit::<T>(2.0) * e(&st)? + e(&bwd)?) / (ds * ds))
}

/// Sampling scheme for the convexity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSampler {
    /// Eigenvalues of Γ^{-1/2}ΣΓ^{-1/2} are e^u with u uniform on [−r, r].
    pub log_eig_range: f64,
    /// Scale of the Gaussian offset Γ^{1/2}z of the mean from n.
    pub mean_scale: f64,
    /// Force m = n.
    #[serde(default)]
    pub centered: bool,
    /// Reject states with 𝖤₁ above this level.
    #[serde(default)]
    pub max_energy: Option<f64>,
}

impl Default for ScanSampler {
    fn default() -> Self {
        ScanSampler { log_eig_range: 2.0, mean_scale: 2.0, centered: false, max_energy: None }
    }
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let g = Mat::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// Draws a state from the sampler; `None` when rejected by the energy cap.
fn sample_state(target: &GaussianTarget<f64>, sampler: &ScanSampler, rng: &mut ChaCha8Rng) -> Result<Option<ScaledGaussian<f64>>> {
    let d = target.dim();
    let root = linalg::sqrt_spd(target.gamma());
    let q = random_orthogonal(d, rng);
    let r = sampler.log_eig_range;
    let u = Uniform::new_inclusive(-r, r).map_err(|e| Error::config(e.to_string()))?;
    let eig = Vector::<f64>::from_fn(d, |_, _| u.sample(rng).exp());
    let b = &q * Mat::from_diagonal(&eig) * q.transpose();
    let sigma = linalg::symmetrize(&(&root * b * &root));
    let m = if sampler.centered {
        target.mean().clone()
    } else {
        let z = Vector::<f64>::from_fn(d, |_, _| StandardNormal.sample(rng));
        target.mean() + &root * z * sampler.mean_scale
    };
    let p = ScaledGaussian::normalized(sigma, m)?;
    if let Some(cap) = sampler.max_energy {
        if gauss::shape_relative_entropy(&p, target)? > cap {
            return Ok(None);
        }
    }
    Ok(Some(p))
}

/// Unit-norm cotangent (|S|²_F + |μ|² = 1, k = 0).
fn sample_eta(d: usize, centered_mean: bool, rng: &mut ChaCha8Rng) -> Cotangent<f64> {
    let g = Mat::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let s = linalg::symmetrize(&g);
    let mu = Vector::<f64>::from_fn(d, |_, _| StandardNormal.sample(rng));
    let mu = if centered_mean { mu * 0.0 } else { mu };
    let eta = Cotangent::new(s, mu, 0.0);
    let n = eta.norm_squared().sqrt();
    eta.scaled(1.0 / n)
}

fn scan_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

const MAX_REJECTIONS: usize = 10_000;

fn scan_sample(
    alpha: f64,
    beta: f64,
    target: &GaussianTarget<f64>,
    sampler: &ScanSampler,
    seed: u64,
    i: usize,
) -> Result<(f64, ScaledGaussian<f64>, Cotangent<f64>)> {
    let mut rng = scan_rng(seed, i);
    for _ in 0..MAX_REJECTIONS {
        if let Some(p) = sample_state(target, sampler, &mut rng)? {
            let eta = sample_eta(target.dim(), false, &mut rng);
            let q = rayleigh_quotient(alpha, beta, &p, target, &eta)?;
            return Ok((q, p, eta));
        }
    }
    Err(Error::config("sampler rejected every draw; raise max_energy or shrink the ranges"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanWitness {
    pub index: usize,
    pub p: ScaledGaussian<f64>,
    pub eta: Cotangent<f64>,
    pub quotient: f64,
    /// The witness was regenerated from its stream and gave the same quotient.
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanReport {
    pub alpha: f64,
    pub beta: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub min_quotient: f64,
    pub witness: ScanWitness,
    /// Quotient quantiles at 0, 0.1, …, 1.
    pub deciles: Vec<f64>,
}

/// Samples (p, η) in parallel (one RNG stream per sample) and reports the
/// smallest Hessian-to-metric quotient.
pub fn convexity_scan(
    alpha: f64,
    beta: f64,
    target: &GaussianTarget<f64>,
    sampler: &ScanSampler,
    n_samples: usize,
    seed: u64,
) -> Result<ScanReport> {
    validate_weights(alpha, beta)?;
    if n_samples == 0 {
        return Err(Error::config("n_samples must be at least 1"));
    }
    let quotients: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| scan_sample(alpha, beta, target, sampler, seed, i).map(|r| r.0))
        .collect::<Result<_>>()?;
    let (index, min_quotient) = quotients
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, q)| if q < best.1 { (i, q) } else { best });
    let (q, p, eta) = scan_sample(alpha, beta, target, sampler, seed, index)?;
    let mut sorted = quotients.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let deciles = (0..=10)
        .map(|k| sorted[((sorted.len() - 1) as f64 * k as f64 / 10.0).round() as usize])
        .collect();
    Ok(ScanReport {
        alpha,
        beta,
        n_samples,
        seed,
        min_quotient,
        witness: ScanWitness { index, p, eta, quotient: q, verified: q == min_quotient },
        deciles,
    })
}

/// Quotients along m = n + t·u for the listed distances t, where u is chosen
/// so that the mean-linear Hessian terms are negative. With β > 0 these
/// decrease without bound.
pub fn non_convexity_witness<T: Scalar>(
    alpha: T,
    beta: T,
    target: &GaussianTarget<T>,
    sigma: &Mat<T>,
    eta: &Cotangent<T>,
    distances: &[T],
) -> Result<Vec<T>> {
    validate_weights(alpha, beta)?;
    let gi = target.precision();
    let m_lin = (sigma * &eta.s + &eta.s * sigma) * alpha * beta + sigma * &eta.s * sigma * beta * beta;
    let g = gi * m_lin * &eta.mu;
    let gn = g.norm();
    if !(gn > T::zero()) {
        return Err(Error::domain("the cotangent has no mean-linear Hessian term; pick S and mu with (SΣ+ΣS)mu != 0"));
    }
    let u = -g / gn;
    distances
        .iter()
        .map(|&t| {
            let p = ScaledGaussian::normalized(sigma.clone(), target.mean() + &u * t)?;
            rayleigh_quotient(alpha, beta, &p, target, eta)
        })
        .collect()
}

/// Bounds valid on the sublevel {𝖤₁ ≤ E}: |m − n| ≤ r₁, ‖Σ‖ ≤ r₂, ‖Σ⁻¹‖ ≤ r₃ (spectral norms).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SublevelBound {
    pub energy: f64,
    pub r_e: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

pub fn sublevel_radius<T: Scalar>(energy: f64, target: &GaussianTarget<T>) -> Result<SublevelBound> {
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::domain(format!("sublevel energy must be positive, got {energy}")));
    }
    let nu_max = linalg::max_eigenvalue(target.gamma()).to_f64_lossy();
    let g_norm = linalg::spectral_norm_sym(target.gamma()).to_f64_lossy();
    let gi_norm = linalg::spectral_norm_sym(target.precision()).to_f64_lossy();
    let r1 = (2.0 * nu_max * energy).sqrt();
    let r2 = g_norm * (1.0 + 4f64.ln() + 4.0 * energy);
    let r3 = gi_norm * (1.0 + 2.0 * energy).exp();
    Ok(SublevelBound { energy, r_e: r1.max(r2).max(r3), r1, r2, r3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_otto_example() {
        let t = GaussianTarget::probability(Mat::from_element(1, 1, 1.0), Vector::zeros(1)).unwrap();
        let p = ScaledGaussian::standard(1);
        let eta = Cotangent::new(Mat::from_element(1, 1, 1.0), Vector::zeros(1), 0.0);
        assert_relative_eq!(hessian_form(1.5, 0.0, &p, &t, &eta).unwrap(), 8.0 * 2.25, max_relative = 1e-14);
    }

    #[test]
    fn zero_costate_is_stationary() {
        let p = ScaledGaussian::<f64>::standard(2);
        let st = GeodesicState::new(&p, Cotangent::new(Mat::zeros(2, 2), Vector::zeros(2), 0.0)).unwrap();
        let d = geodesic_rhs(1.0, 1.0, &st, false);
        assert_eq!(d.sigma.norm() + d.m.norm() + d.kappa.abs() + d.costate.s.norm() + d.costate.k.abs(), 0.0);
    }

    #[test]
    fn straight_line_in_mean_for_pure_transport() {
        let p = ScaledGaussian::<f64>::standard(2);
        let mu = Vector::from_vec(vec![0.3, -0.4]);
        let st = GeodesicState::new(&p, Cotangent::new(Mat::zeros(2, 2), mu.clone(), 0.0)).unwrap();
        let d = geodesic_rhs(2.0, 0.0, &st, true);
        assert!((d.m - mu * 2.0).norm() < 1e-15);
        assert_eq!(d.costate.mu.norm(), 0.0);
    }

    #[test]
    fn hellinger_geodesic_is_quadratic_in_mass() {
        // (Σ, m, s²κ₀) with k = 2/s solves the pure-reaction geodesic equations.
        let (k0, s0) = (1.7f64, 0.8);
        let p = ScaledGaussian::new(Mat::identity(2, 2) * 1.3, Vector::from_vec(vec![0.2, 0.1]), k0 * s0 * s0).unwrap();
        let st = GeodesicState::new(&p, Cotangent::new(Mat::zeros(2, 2), Vector::zeros(2), 2.0 / s0)).unwrap();
        let path = integrate_geodesic(0.5, 1.0, &st, 1e-3, 500, false).unwrap();
        let s1 = s0 + 0.5;
        let last = path.last().unwrap();
        assert_relative_eq!(last.kappa, k0 * s1 * s1, max_relative = 1e-10);
        assert_relative_eq!(last.costate.k, 2.0 / s1, max_relative = 1e-10);
    }

    #[test]
    fn scaled_energy_is_not_convex_along_hellinger_geodesic() {
        // e(s) = 𝖤(Σ, m, s²κ) has e'' = 2κH + 4κ + 2κ ln(s²κ/ϰ) → −∞ as s → 0.
        let t = GaussianTarget::new(Mat::identity(1, 1), Vector::zeros(1), 1.0).unwrap();
        let (kappa, sigma, m) = (1.0f64, Mat::from_element(1, 1, 1.5), Vector::from_element(1, 0.5));
        let e = |s: f64| gauss::relative_entropy(&ScaledGaussian::new(sigma.clone(), m.clone(), s * s * kappa).unwrap(), &t).unwrap();
        let h = gauss::shape_relative_entropy(&ScaledGaussian::normalized(sigma.clone(), m.clone()).unwrap(), &t).unwrap();
        let mut prev = f64::INFINITY;
        for s in [1e-1, 1e-2, 1e-3] {
            let ds = s * 1e-3;
            let fd = (e(s + ds) - 2.0 * e(s) + e(s - ds)) / (ds * ds);
            let exact = 2.0 * kappa * h + 4.0 * kappa + 2.0 * kappa * (s * s * kappa).ln();
            assert_relative_eq!(fd, exact, max_relative = 1e-4);
            assert!(exact < prev);
            prev = exact;
        }
        assert!(prev < 0.0);
    }

    #[test]
    fn sublevel_radius_limits() {
        let t = GaussianTarget::probability(Mat::<f64>::identity(2, 2), Vector::zeros(2)).unwrap();
        let b = sublevel_radius(1e-9, &t).unwrap();
        assert_relative_eq!(b.r2, 1.0 + 4f64.ln(), max_relative = 1e-8);
        assert!(sublevel_radius(0.0, &t).is_err());
        assert!(sublevel_radius(2.0, &t).unwrap().r_e >= b.r_e);
    }
}
