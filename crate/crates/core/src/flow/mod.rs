//! Reduced Hellinger–Kantorovich gradient flows on Gaussian parameters.

pub mod eigen;
pub mod ode;
pub mod trajectory;

use serde::{Deserialize, Serialize};

use crate::descent::{MomentEstimator, Potential};
use crate::error::{Error, Result};
use crate::gauss::{self, GaussianTarget, ScaledGaussian, SimpleCoords};
use crate::linalg::{self, Mat, Vector};
use crate::onsager::{validate_weights, Tangent};
use crate::scalar::{lit, Scalar};

pub use eigen::{eigen_envelope, rhs_eigen, EigenRhs};
pub use ode::{guarded_step, rk4_step, euler_step, OdeState, RawPoint};
pub use trajectory::{integrate, integrate_simple, GaussianFlow, GeneralFlow, ReducedFlow, SimpleTrajectory, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

/// Whether the total mass evolves or is pinned to one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassDynamics {
    #[default]
    Scaled,
    Normalized,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub track_eigen: bool,
    /// Keep every k-th accepted step (the final one is always kept).
    #[serde(default = "one")]
    pub record_every: usize,
    /// Fail when the exactly computed energy increases by more than this
    /// relative slack; `None` disables the check.
    #[serde(default = "default_slack")]
    pub monotonicity_slack: Option<f64>,
}

fn default_slack() -> Option<f64> {
    Some(1e-8)
}

impl FlowConfig {
    pub fn new(alpha: f64, beta: f64, dt: f64, t_end: f64) -> Self {
        FlowConfig {
            alpha,
            beta,
            dt,
            t_end,
            integrator: Integrator::Rk4,
            track_eigen: false,
            record_every: 1,
            monotonicity_slack: default_slack(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(self.alpha, self.beta)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) || self.dt > self.t_end {
            return Err(Error::config(format!("need 0 < dt <= t_end, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        Ok(())
    }
}

/// Time derivative of the exponent coordinates (A, b, c).
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleTangent<T: Scalar> {
    pub da: Mat<T>,
    pub db: Vector<T>,
    pub dc: T,
}

pub(crate) fn rhs_simple_raw<T: Scalar>(
    alpha: T,
    beta: T,
    a: &Mat<T>,
    b: &Vector<T>,
    c: T,
    q_bar: &SimpleCoords<T>,
) -> SimpleTangent<T> {
    let two = lit::<T>(2.0);
    let (ab, bb, cb) = (q_bar.a(), q_bar.b(), q_bar.c());
    let da = (ab * a + a * ab - a * a * two) * alpha + (ab - a) * beta;
    let db = (a * bb + ab * b - a * b * two) * alpha + (bb - b) * beta;
    let dc = alpha * ((ab - a).trace() + b.dot(&(b - bb))) + beta * (cb - c);
    SimpleTangent { da: linalg::symmetrize(&da), db, dc }
}

/// Flow towards the Gaussian with exponent coordinates `q_bar`, in exponent coordinates.
pub fn rhs_simple<T: Scalar>(alpha: T, beta: T, q: &SimpleCoords<T>, q_bar: &SimpleCoords<T>) -> Result<SimpleTangent<T>> {
    validate_weights(alpha, beta)?;
    if q.dim() != q_bar.dim() {
        return Err(Error::dim("state and target dimensions differ"));
    }
    Ok(rhs_simple_raw(alpha, beta, q.a(), q.b(), q.c(), q_bar))
}

pub(crate) fn rhs_gaussian_raw<T: Scalar>(
    alpha: T,
    beta: T,
    sigma: &Mat<T>,
    m: &Vector<T>,
    target: &GaussianTarget<T>,
) -> (Mat<T>, Vector<T>) {
    let d = m.len();
    let gi = target.precision();
    let gs = gi * sigma;
    let two_i = Mat::<T>::identity(d, d) * lit::<T>(2.0);
    let d_sigma = (two_i - &gs - gs.transpose()) * alpha + (sigma - sigma * &gs) * beta;
    let g = gi * (m - target.mean());
    let d_m = -(&g * alpha + sigma * &g * beta);
    (linalg::symmetrize(&d_sigma), d_m)
}

/// Flow towards ϰN(n, Γ) in (Σ, m, κ).
pub fn rhs_gaussian_target<T: Scalar>(
    alpha: T,
    beta: T,
    p: &ScaledGaussian<T>,
    target: &GaussianTarget<T>,
    mass: MassDynamics,
) -> Result<Tangent<T>> {
    validate_weights(alpha, beta)?;
    target.check_dim(p.dim())?;
    let (d_sigma, d_m) = rhs_gaussian_raw(alpha, beta, p.sigma(), p.mean(), target);
    let d_kappa = match mass {
        MassDynamics::Normalized => T::zero(),
        MassDynamics::Scaled => {
            let h = gauss::shape_relative_entropy(p, target)?;
            -beta * p.kappa() * ((p.kappa() / target.varkappa()).ln() + h)
        }
    };
    Ok(Tangent { d_sigma, d_m, d_kappa })
}

/// Flow towards a log-concave target e^{−V}, with the Gaussian expectations of
/// ∇V and ∇²V supplied by an estimator.
///
/// The mass equation targets ϰ e^{−V}/Z when the normalizer Z is known and
/// the unnormalized measure e^{−V} otherwise.
pub fn rhs_general_target<T: Scalar>(
    alpha: T,
    beta: T,
    p: &ScaledGaussian<T>,
    potential: &dyn Potential<T>,
    estimator: &mut MomentEstimator<T>,
    mass: MassDynamics,
) -> Result<Tangent<T>> {
    validate_weights(alpha, beta)?;
    if potential.dim() != p.dim() {
        return Err(Error::dim("potential and state dimensions differ"));
    }
    let mom = estimator.estimate(potential, p.sigma(), p.mean())?;
    let sigma = p.sigma();
    let d = p.dim();
    let hs = &mom.e_hess * sigma;
    let two_i = Mat::<T>::identity(d, d) * lit::<T>(2.0);
    let d_sigma = (two_i - &hs - hs.transpose()) * alpha + (sigma - sigma * &hs) * beta;
    let d_m = -(&mom.e_grad * alpha + sigma * &mom.e_grad * beta);
    let d_kappa = match mass {
        MassDynamics::Normalized => T::zero(),
        MassDynamics::Scaled => {
            let ent = p.shape_entropy()?;
            let log_ratio = match potential.log_normalizer() {
                Some(log_z) => mom.e_v + log_z - ent + (p.kappa() / potential.target_mass()).ln(),
                None => mom.e_v - ent + p.kappa().ln(),
            };
            -beta * p.kappa() * log_ratio
        }
    };
    Ok(Tangent { d_sigma: linalg::symmetrize(&d_sigma), d_m, d_kappa })
}

/// Which closed form produced [`explicit_a`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplicitBranch {
    /// A₀ = Ā; the solution is constant.
    Equilibrium,
    /// B(t) = (B₀⁻¹ + W)⁻¹.
    Direct,
    /// B(t) = B₀ (I + W B₀)⁻¹, used when B₀ is singular or ill-conditioned.
    Regularized,
}

/// Condition number above which B₀ counts as singular.
const DIRECT_MAX_CONDITION: f64 = 1e10;

/// Closed-form precision A(t) = Ā + e^{−Ct} B(t) e^{−Ct} with C = αĀ + (β/2)I
/// and W = αC⁻¹(I − e^{−2Ct}).
pub fn explicit_a<T: Scalar>(t: T, alpha: T, beta: T, a0: &Mat<T>, a_bar: &Mat<T>) -> Result<(Mat<T>, ExplicitBranch)> {
    validate_weights(alpha, beta)?;
    if !(t >= T::zero()) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    let a0 = linalg::ingest_symmetric(a0.clone(), "A0")?;
    let a_bar = linalg::ingest_symmetric(a_bar.clone(), "A_bar")?;
    if a0.nrows() != a_bar.nrows() {
        return Err(Error::dim("A0 and A_bar differ in size"));
    }
    linalg::cholesky(&a0, "A0")?;
    linalg::cholesky(&a_bar, "A_bar")?;
    let b0 = &a0 - &a_bar;
    if b0.norm() <= lit::<T>(1e-14) * a_bar.norm() {
        return Ok((a_bar, ExplicitBranch::Equilibrium));
    }
    let d = a0.nrows();
    let (lam, v) = linalg::sym_eigen(&a_bar);
    let half_beta = beta * lit::<T>(0.5);
    let c = lam.map(|l| alpha * l + half_beta);
    let decay = Mat::from_diagonal(&c.map(|ci| (-ci * t).exp()));
    let e_ct = &v * decay * v.transpose();
    let two = lit::<T>(2.0);
    let w_diag = c.map(|ci| -alpha * (-two * ci * t).exp_m1() / ci);
    let w = &v * Mat::from_diagonal(&w_diag) * v.transpose();

    let (bvals, _) = linalg::sym_eigen(&b0);
    let max_abs = bvals.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let min_abs = bvals.iter().fold(max_abs, |m, x| m.min(x.abs()));
    let direct = min_abs * lit::<T>(DIRECT_MAX_CONDITION) > max_abs;
    let (bt, branch) = if direct {
        let b0_inv = b0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("inverting A0 - A_bar failed".into()))?;
        let inner = linalg::symmetrize(&(b0_inv + &w));
        let bt = inner
            .try_inverse()
            .ok_or_else(|| Error::Numerical("inverting B0^-1 + W failed".into()))?;
        (bt, ExplicitBranch::Direct)
    } else {
        let ident = Mat::<T>::identity(d, d);
        let m = &ident + &w * &b0;
        let lu = m.lu();
        let bt = lu
            .solve(&b0)
            .ok_or_else(|| Error::Numerical("I + W B0 is singular".into()))?;
        // (I + W B₀)⁻¹ B₀ = B₀ (I + B₀ W)⁻¹ for symmetric B₀ and W.
        (bt, ExplicitBranch::Regularized)
    };
    let a_t = &a_bar + &e_ct * linalg::symmetrize(&bt) * &e_ct;
    Ok((linalg::symmetrize(&a_t), branch))
}

/// Closed-form mass κ(t) = ϰ (κ₀/ϰ)^{e^{−βt}} exp(−β ∫₀ᵗ e^{−β(t−s)} H(s) ds),
/// given the shape relative entropy H on a uniform time grid starting at 0.
pub fn explicit_kappa_from_entropy<T: Scalar>(times: &[T], h: &[T], beta: T, kappa0: T, varkappa: T) -> Result<Vec<T>> {
    if times.len() != h.len() || times.is_empty() {
        return Err(Error::dim("times and entropy values must be non-empty and of equal length"));
    }
    if times[0] != T::zero() {
        return Err(Error::domain("time grid must start at 0"));
    }
    let n = times.len();
    if n > 1 {
        let step = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - step).abs() > lit::<T>(1e-9) * step.max(T::one()) {
                return Err(Error::domain("time grid must be uniform"));
            }
        }
    }
    // integral[i] = ∫₀^{tᵢ} e^{−β(tᵢ−s)} H(s) ds, accumulated panel by panel.
    let mut integral = vec![T::zero(); n];
    let g = |i: usize, j: usize| (-beta * (times[i] - times[j])).exp() * h[j];
    for i in 1..n {
        let dt = times[i] - times[i - 1];
        integral[i] = if i == 1 && n > 2 {
            // Quadratic through the first three nodes, integrated over the first panel.
            dt / lit::<T>(12.0) * (lit::<T>(5.0) * g(1, 0) + lit::<T>(8.0) * g(1, 1) - g(1, 2))
        } else if i == 1 {
            dt * lit::<T>(0.5) * (g(1, 0) + g(1, 1))
        } else if i % 2 == 0 {
            let prev = (-beta * (times[i] - times[i - 2])).exp() * integral[i - 2];
            prev + dt / lit::<T>(3.0) * (g(i, i - 2) + lit::<T>(4.0) * g(i, i - 1) + g(i, i))
        } else {
            let prev = (-beta * (times[i] - times[i - 3])).exp() * integral[i - 3];
            prev + lit::<T>(3.0) * dt / lit::<T>(8.0)
                * (g(i, i - 3) + lit::<T>(3.0) * g(i, i - 2) + lit::<T>(3.0) * g(i, i - 1) + g(i, i))
        };
    }
    let log_ratio0 = (kappa0 / varkappa).ln();
    Ok(times
        .iter()
        .zip(&integral)
        .map(|(&t, &int)| varkappa * (log_ratio0 * (-beta * t).exp() - beta * int).exp())
        .collect())
}

/// Closed-form mass along a recorded trajectory of a Gaussian-target flow.
pub fn explicit_kappa<T: Scalar>(traj: &Trajectory<T>, beta: T, target: &GaussianTarget<T>) -> Result<Vec<T>> {
    let h: Vec<T> = traj.energy.iter().map(|e| e.shape()).collect();
    let kappa0 = traj.points[0].kappa();
    explicit_kappa_from_entropy(&traj.times, &h, beta, kappa0, target.varkappa())
}
