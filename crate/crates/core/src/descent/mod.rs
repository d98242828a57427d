//! Discrete-time HK-Gaussian descent: a Bures–Wasserstein step, a Fisher–Rao
//! step on the precision, and an optional mass step per iteration.

pub mod estimator;
pub mod potential;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decay::fit_log_rate;
use crate::error::{Error, Result};
use crate::gauss::ScaledGaussian;
use crate::linalg::{self, serde_nested, Mat, Vector};
use crate::onsager::validate_weights;
use crate::scalar::{lit, Scalar};

pub use estimator::{gauss_hermite_rule, EstimatorConfig, MomentEstimator};
pub use potential::{FnPotential, LogisticData, LogisticPotential, Moments, Potential, PotentialKind, QuadraticPotential};

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Re-estimate the moments between the transport and reaction steps.
    #[serde(default = "yes")]
    pub resample_midstep: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub track_mass: bool,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Fraction of final iterates entering the Polyak average.
    #[serde(default = "half")]
    pub tail_fraction: f64,
}

impl DescentConfig {
    pub fn new(alpha: f64, beta: f64, tau: f64, n_steps: usize) -> Self {
        DescentConfig {
            alpha,
            beta,
            tau,
            n_steps,
            estimator: EstimatorConfig::ExactGaussian,
            resample_midstep: true,
            seed: 0,
            track_mass: false,
            record_every: 1,
            tail_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(self.alpha, self.beta)?;
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.tau * self.beta >= 1.0 {
            return Err(Error::config(format!("need tau * beta < 1, got {}", self.tau * self.beta)));
        }
        if self.n_steps == 0 || self.record_every == 0 {
            return Err(Error::config("n_steps and record_every must be at least 1"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::config("tail_fraction must lie in (0, 1]"));
        }
        self.estimator.validate()
    }
}

/// Σ ← MΣM with M = I + τα(Σ⁻¹ − Ê[∇²V]); m ← m − τα Ê[∇V].
pub fn bw_step<T: Scalar>(tau: T, alpha: T, sigma: &Mat<T>, m: &Vector<T>, mom: &Moments<T>) -> Result<(Mat<T>, Vector<T>)> {
    let d = m.len();
    let ta = tau * alpha;
    let sigma_inv = linalg::spd_inverse(sigma, "Sigma")?;
    let step = linalg::symmetrize(&(Mat::<T>::identity(d, d) + (sigma_inv - &mom.e_hess) * ta));
    let lam = linalg::min_eigenvalue(&step);
    if !(lam > T::zero()) {
        return Err(Error::Numerical(format!(
            "transport step matrix is not positive definite (eigenvalue {lam}); reduce tau"
        )));
    }
    let sigma_new = linalg::symmetrize(&(&step * sigma * &step));
    Ok((sigma_new, m - &mom.e_grad * ta))
}

/// Σ⁻¹ ← (1 − τβ)Σ⁻¹ + τβ Ê[∇²V]; m ← m − τβ Σ_{new} Ê[∇V].
pub fn fr_step<T: Scalar>(tau: T, beta: T, sigma: &Mat<T>, m: &Vector<T>, mom: &Moments<T>) -> Result<(Mat<T>, Vector<T>)> {
    let tb = tau * beta;
    let prec = linalg::spd_inverse(sigma, "Sigma")? * (T::one() - tb) + &mom.e_hess * tb;
    let prec = linalg::symmetrize(&prec);
    let sigma_new = linalg::spd_inverse(&prec, "updated precision")?;
    let m_new = m - &sigma_new * &mom.e_grad * tb;
    Ok((sigma_new, m_new))
}

/// κ ← κ − τβκ(Ĥ + ln(κ/ϰ)); a non-positive result is retried with τ halved
/// (as repeated sub-steps) up to 40 times.
pub fn mass_step<T: Scalar>(tau: T, beta: T, kappa: T, h_hat: T, varkappa: T) -> Result<T> {
    let f = |k: T, h: T| k - h * beta * k * (h_hat + (k / varkappa).ln());
    for level in 0..=40u32 {
        let n = 1usize << level.min(20);
        let h = tau / T::from_usize_lossy(n);
        let mut k = kappa;
        let mut ok = true;
        for _ in 0..n {
            k = f(k, h);
            if !(k > T::zero()) || !k.is_finite() {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(k);
        }
    }
    Err(Error::Numerical("mass step stays non-positive after halving tau".into()))
}

/// Shape relative entropy estimate Ê[V] + ln Z − ½ ln det(2πeΣ); without a
/// known normalizer, the same quantity up to the constant ln Z.
pub fn entropy_estimate<T: Scalar>(pot: &dyn Potential<T>, p: &ScaledGaussian<T>, mom: &Moments<T>) -> Result<T> {
    Ok(mom.e_v + pot.log_normalizer().unwrap_or(T::zero()) - p.shape_entropy()?)
}

pub fn estimate_moments<T: Scalar>(est: &mut MomentEstimator<T>, p: &ScaledGaussian<T>, pot: &dyn Potential<T>) -> Result<Moments<T>> {
    est.estimate(pot, p.sigma(), p.mean())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct DescentRecord<T: Scalar> {
    pub k: usize,
    pub kl_estimate: T,
    pub point: ScaledGaussian<T>,
}

/// Tail average of the iterates with batch-means standard errors for the mean.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct PolyakAverage<T: Scalar> {
    pub n_iterates: usize,
    #[serde(with = "serde_nested::vector")]
    pub mean: Vector<T>,
    #[serde(with = "serde_nested::matrix")]
    pub sigma: Mat<T>,
    #[serde(with = "serde_nested::vector")]
    pub mean_stderr: Vector<T>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct DescentResult<T: Scalar> {
    pub records: Vec<DescentRecord<T>>,
    #[serde(rename = "final")]
    pub final_point: ScaledGaussian<T>,
    pub final_kl: T,
    pub polyak: PolyakAverage<T>,
    /// −d/dt ln KL on the tail half, with t = kτ.
    pub fitted_rate: Option<f64>,
    pub normalizer_known: bool,
}

const POLYAK_BATCHES: usize = 20;

/// Runs the descent from `p0`; deterministic for a fixed seed.
pub fn run_descent<T: Scalar>(cfg: &DescentConfig, p0: &ScaledGaussian<T>, pot: &dyn Potential<T>) -> Result<DescentResult<T>> {
    cfg.validate()?;
    if pot.dim() != p0.dim() {
        return Err(Error::dim(format!("potential has dimension {}, start has {}", pot.dim(), p0.dim())));
    }
    if cfg.track_mass && pot.log_normalizer().is_none() {
        return Err(Error::config("the mass step needs a potential with a known normalizer"));
    }
    let mut est = MomentEstimator::from_config(&cfg.estimator, cfg.seed)?;
    let (tau, alpha, beta) = (lit::<T>(cfg.tau), lit::<T>(cfg.alpha), lit::<T>(cfg.beta));
    let d = p0.dim();
    let tail_start = cfg.n_steps - ((cfg.n_steps as f64 * cfg.tail_fraction).ceil() as usize).clamp(1, cfg.n_steps);
    let tail_len = cfg.n_steps - tail_start;
    let batch_len = (tail_len / POLYAK_BATCHES).max(1);

    let mut p = p0.clone();
    let mut records = Vec::new();
    let mut sum_m = Vector::<T>::zeros(d);
    let mut sum_sigma = Mat::<T>::zeros(d, d);
    let mut batch_sum = Vector::<T>::zeros(d);
    let mut batch_means: Vec<Vector<T>> = Vec::new();
    let mut batch_fill = 0;

    let fail = |k: usize| move |e: Error| Error::Descent { iteration: k, source: Box::new(e) };

    let mut mom = estimate_moments(&mut est, &p, pot).map_err(fail(0))?;
    for k in 0..cfg.n_steps {
        let kl = entropy_estimate(pot, &p, &mom).map_err(fail(k))?;
        if k % cfg.record_every == 0 {
            records.push(DescentRecord { k, kl_estimate: kl, point: p.clone() });
        }
        let (mut sigma, mut m) = (p.sigma().clone(), p.mean().clone());
        if cfg.alpha > 0.0 {
            (sigma, m) = bw_step(tau, alpha, &sigma, &m, &mom).map_err(fail(k))?;
        }
        if cfg.beta > 0.0 {
            let mid = if cfg.resample_midstep && cfg.alpha > 0.0 {
                est.estimate(pot, &sigma, &m).map_err(fail(k))?
            } else {
                mom.clone()
            };
            (sigma, m) = fr_step(tau, beta, &sigma, &m, &mid).map_err(fail(k))?;
        }
        let kappa = if cfg.track_mass {
            let vk = pot.target_mass();
            mass_step(tau, beta, p.kappa(), kl, vk).map_err(fail(k))?
        } else {
            p.kappa()
        };
        p = ScaledGaussian::new(sigma, m, kappa).map_err(fail(k + 1))?;
        mom = estimate_moments(&mut est, &p, pot).map_err(fail(k + 1))?;

        if k >= tail_start {
            sum_m += p.mean();
            sum_sigma += p.sigma();
            batch_sum += p.mean();
            batch_fill += 1;
            if batch_fill == batch_len {
                batch_means.push(&batch_sum / T::from_usize_lossy(batch_len));
                batch_sum.fill(T::zero());
                batch_fill = 0;
            }
        }
    }
    let final_kl = entropy_estimate(pot, &p, &mom).map_err(fail(cfg.n_steps))?;
    if records.last().map(|r| r.k) != Some(cfg.n_steps) {
        records.push(DescentRecord { k: cfg.n_steps, kl_estimate: final_kl, point: p.clone() });
    }

    let n_tail = T::from_usize_lossy(tail_len.max(1));
    let nb = batch_means.len();
    let mean_stderr = if nb >= 2 {
        let bm = batch_means.iter().fold(Vector::<T>::zeros(d), |a, b| a + b) / T::from_usize_lossy(nb);
        let var = batch_means
            .iter()
            .fold(Vector::<T>::zeros(d), |a, b| a + (b - &bm).map(|x| x * x))
            / T::from_usize_lossy(nb - 1);
        var.map(|v| (v / T::from_usize_lossy(nb)).sqrt())
    } else {
        Vector::zeros(d)
    };
    let polyak = PolyakAverage { n_iterates: tail_len, mean: sum_m / n_tail, sigma: sum_sigma / n_tail, mean_stderr };

    let times: Vec<f64> = records.iter().map(|r| r.k as f64 * cfg.tau).collect();
    let kls: Vec<f64> = records.iter().map(|r| r.kl_estimate.to_f64_lossy()).collect();
    let fitted_rate = if pot.log_normalizer().is_some() { fit_log_rate(&times, &kls, 1e2 * f64::EPSILON) } else { None };

    Ok(DescentResult { records, final_point: p, final_kl, polyak, fitted_rate, normalizer_known: pot.log_normalizer().is_some() })
}

impl<T: Scalar> DescentResult<T> {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.final_point.dim();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string(), "kl_estimate".to_string()];
        header.extend((1..=d).map(|i| format!("m_{i}")));
        for i in 1..=d {
            for j in 1..=d {
                header.push(format!("sigma_{i}_{j}"));
            }
        }
        header.push("kappa".into());
        wr.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string(), format!("{:e}", r.kl_estimate.to_f64_lossy())];
            row.extend(r.point.mean().iter().map(|x| format!("{:e}", x.to_f64_lossy())));
            row.extend(
                serde_nested::mat_to_rows(r.point.sigma())
                    .into_iter()
                    .flatten()
                    .map(|x| format!("{:e}", x.to_f64_lossy())),
            );
            row.push(format!("{:e}", r.point.kappa().to_f64_lossy()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// KL curves of the combined, reaction-only and transport-only descents from
/// the same start, on a shared iteration grid.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryComparison {
    pub k: Vec<usize>,
    pub kl_bwfr: Vec<f64>,
    pub kl_fr: Vec<f64>,
    pub kl_bw: Vec<f64>,
}

pub fn compare_geometries<T: Scalar>(cfg: &DescentConfig, p0: &ScaledGaussian<T>, pot: &dyn Potential<T>) -> Result<GeometryComparison> {
    if cfg.alpha <= 0.0 || cfg.beta <= 0.0 {
        return Err(Error::config("the comparison needs alpha > 0 and beta > 0"));
    }
    let run = |a: f64, b: f64| {
        let c = DescentConfig { alpha: a, beta: b, ..cfg.clone() };
        run_descent(&c, p0, pot)
    };
    let both = run(cfg.alpha, cfg.beta)?;
    let fr = run(0.0, cfg.beta)?;
    let bw = run(cfg.alpha, 0.0)?;
    let kl = |r: &DescentResult<T>| r.records.iter().map(|x| x.kl_estimate.to_f64_lossy()).collect::<Vec<_>>();
    Ok(GeometryComparison {
        k: both.records.iter().map(|r| r.k).collect(),
        kl_bwfr: kl(&both),
        kl_fr: kl(&fr),
        kl_bw: kl(&bw),
    })
}

impl GeometryComparison {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "kl_bwfr", "kl_fr", "kl_bw"])?;
        for i in 0..self.k.len() {
            wr.write_record([
                self.k[i].to_string(),
                format!("{:e}", self.kl_bwfr[i]),
                format!("{:e}", self.kl_fr[i]),
                format!("{:e}", self.kl_bw[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
