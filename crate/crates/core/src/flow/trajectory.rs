use std::io::Write;
use std::path::Path;

use crate::decay::{dissipation_from_moments, dissipation_split, DissipationSplit};
use crate::descent::{MomentEstimator, Potential};
use crate::error::{Error, Result};
use crate::flow::eigen::match_by_overlap;
use crate::flow::ode::{guarded_step, OdeState, RawPoint};
use crate::flow::{rhs_general_target, rhs_gaussian_target, rhs_simple_raw, FlowConfig, Integrator, MassDynamics, SimpleTangent};
use crate::gauss::{self, EnergySplit, GaussianTarget, ScaledGaussian, SimpleCoords};
use crate::linalg::{self, Mat, Vector};
use crate::onsager::Tangent;
use crate::scalar::{lit, Scalar};

/// Smallest covariance eigenvalue an accepted step may have.
pub const SPD_FLOOR: f64 = 1e-12;

/// A vector field on scaled Gaussians together with its energy bookkeeping.
pub trait ReducedFlow<T: Scalar> {
    fn dim(&self) -> usize;
    fn mass(&self) -> MassDynamics;
    fn velocity(&mut self, p: &ScaledGaussian<T>) -> Result<Tangent<T>>;
    fn energy(&mut self, p: &ScaledGaussian<T>) -> Result<EnergySplit<T>>;
    fn dissipation(&mut self, p: &ScaledGaussian<T>) -> Result<DissipationSplit<T>>;
    fn gaussian_target(&self) -> Option<&GaussianTarget<T>> {
        None
    }
    /// Whether `energy` is exact, so that monotonic decrease can be enforced.
    fn energy_is_exact(&self) -> bool;
}

/// Flow towards a Gaussian target ϰN(n, Γ).
#[derive(Clone, Debug)]
pub struct GaussianFlow<T: Scalar> {
    pub alpha: T,
    pub beta: T,
    pub target: GaussianTarget<T>,
    pub mass: MassDynamics,
}

impl<T: Scalar> GaussianFlow<T> {
    pub fn new(alpha: T, beta: T, target: GaussianTarget<T>, mass: MassDynamics) -> Self {
        GaussianFlow { alpha, beta, target, mass }
    }
}

impl<T: Scalar> ReducedFlow<T> for GaussianFlow<T> {
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn mass(&self) -> MassDynamics {
        self.mass
    }
    fn velocity(&mut self, p: &ScaledGaussian<T>) -> Result<Tangent<T>> {
        rhs_gaussian_target(self.alpha, self.beta, p, &self.target, self.mass)
    }
    fn energy(&mut self, p: &ScaledGaussian<T>) -> Result<EnergySplit<T>> {
        let mut e = gauss::entropy_split(p, &self.target)?;
        if self.mass == MassDynamics::Normalized {
            e.mass_term = T::zero();
        }
        Ok(e)
    }
    fn dissipation(&mut self, p: &ScaledGaussian<T>) -> Result<DissipationSplit<T>> {
        dissipation_split(self.alpha, self.beta, p, &self.target, self.mass)
    }
    fn gaussian_target(&self) -> Option<&GaussianTarget<T>> {
        Some(&self.target)
    }
    fn energy_is_exact(&self) -> bool {
        true
    }
}

/// Flow towards e^{−V} with estimated Gaussian expectations.
///
/// The energy is reported as a single estimated shape term in `h_cov`; `h_mean`
/// is zero because no target mean/covariance split exists in general.
pub struct GeneralFlow<'a, T: Scalar> {
    pub alpha: T,
    pub beta: T,
    pub potential: &'a dyn Potential<T>,
    pub estimator: MomentEstimator<T>,
    pub mass: MassDynamics,
}

impl<T: Scalar> GeneralFlow<'_, T> {
    fn shape_energy(&mut self, p: &ScaledGaussian<T>) -> Result<T> {
        let mom = self.estimator.estimate(self.potential, p.sigma(), p.mean())?;
        let log_z = self.potential.log_normalizer().unwrap_or(T::zero());
        Ok(mom.e_v + log_z - p.shape_entropy()?)
    }
}

impl<T: Scalar> ReducedFlow<T> for GeneralFlow<'_, T> {
    fn dim(&self) -> usize {
        self.potential.dim()
    }
    fn mass(&self) -> MassDynamics {
        self.mass
    }
    fn velocity(&mut self, p: &ScaledGaussian<T>) -> Result<Tangent<T>> {
        rhs_general_target(self.alpha, self.beta, p, self.potential, &mut self.estimator, self.mass)
    }
    fn energy(&mut self, p: &ScaledGaussian<T>) -> Result<EnergySplit<T>> {
        let h = self.shape_energy(p)?;
        let mass_term = match (self.mass, self.potential.log_normalizer()) {
            (MassDynamics::Scaled, Some(_)) => {
                let vk = self.potential.target_mass();
                vk * gauss::lambda_b(p.kappa() / vk)
            }
            _ => T::zero(),
        };
        Ok(EnergySplit { h_cov: h, h_mean: T::zero(), mass_term })
    }
    fn dissipation(&mut self, p: &ScaledGaussian<T>) -> Result<DissipationSplit<T>> {
        let mom = self.estimator.estimate(self.potential, p.sigma(), p.mean())?;
        let mut d = dissipation_from_moments(self.alpha, self.beta, p.sigma(), &p.precision()?, &mom.e_hess, &mom.e_grad);
        if self.mass == MassDynamics::Scaled {
            let log_z = self.potential.log_normalizer();
            let k = mom.e_v + log_z.unwrap_or(T::zero()) - p.shape_entropy()?
                + (p.kappa() / log_z.map_or(T::one(), |_| self.potential.target_mass())).ln();
            d.d_mass = self.beta * p.kappa() * k * k;
        }
        Ok(d)
    }
    fn energy_is_exact(&self) -> bool {
        matches!(self.estimator, MomentEstimator::Exact) && self.potential.log_normalizer().is_some()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub points: Vec<ScaledGaussian<T>>,
    pub energy: Vec<EnergySplit<T>>,
    pub dissipation: Vec<DissipationSplit<T>>,
    /// Eigenvalues of Γ^{-1/2} Σ Γ^{-1/2}, continued by eigenvector overlap.
    pub eigen: Option<Vec<Vector<T>>>,
    pub mass: MassDynamics,
    /// Number of step halvings forced by loss of positive definiteness.
    pub halvings: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_energy(&self, i: usize) -> T {
        match self.mass {
            MassDynamics::Normalized => self.energy[i].shape(),
            MassDynamics::Scaled => self.energy[i].total(self.points[i].kappa()),
        }
    }

    pub fn total_dissipation(&self, i: usize) -> T {
        match self.mass {
            MassDynamics::Normalized => self.dissipation[i].shape(),
            MassDynamics::Scaled => self.dissipation[i].total(self.points[i].kappa()),
        }
    }

    pub fn last(&self) -> &ScaledGaussian<T> {
        self.points.last().expect("trajectory is never empty")
    }

    pub fn csv_header(&self) -> Vec<String> {
        let d = self.points[0].dim();
        let mut h = vec!["t".to_string()];
        for i in 1..=d {
            for j in 1..=d {
                h.push(format!("sigma_{i}_{j}"));
            }
        }
        h.extend((1..=d).map(|i| format!("m_{i}")));
        h.extend(["kappa", "h_cov", "h_mean", "d_cov", "d_mean"].map(String::from));
        if self.eigen.is_some() {
            h.extend((1..=d).map(|i| format!("b_{i}")));
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.csv_header())?;
        for i in 0..self.len() {
            let p = &self.points[i];
            let mut row: Vec<f64> = vec![self.times[i].to_f64_lossy()];
            row.extend(linalg::serde_nested::mat_to_rows(p.sigma()).into_iter().flatten().map(|x| x.to_f64_lossy()));
            row.extend(p.mean().iter().map(|x| x.to_f64_lossy()));
            let (e, dd) = (&self.energy[i], &self.dissipation[i]);
            row.extend([p.kappa(), e.h_cov, e.h_mean, dd.d_cov, dd.d_mean].map(|x| x.to_f64_lossy()));
            if let Some(eig) = &self.eigen {
                row.extend(eig[i].iter().map(|x| x.to_f64_lossy()));
            }
            wr.write_record(row.iter().map(|x| format!("{x:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn admissible<T: Scalar>(s: &RawPoint<T>) -> bool {
    s.kappa > T::zero()
        && s.kappa.is_finite()
        && s.m.iter().all(|x| x.is_finite())
        && s.sigma.iter().all(|x| x.is_finite())
        && linalg::min_eigenvalue(&s.sigma) > lit(SPD_FLOOR)
}

fn to_point<T: Scalar>(s: &RawPoint<T>) -> Result<ScaledGaussian<T>> {
    ScaledGaussian::new(s.sigma.clone(), s.m.clone(), s.kappa)
}

/// Integrates a reduced flow on the fixed grid `0, dt, 2dt, …, t_end`.
pub fn integrate<T: Scalar>(flow: &mut dyn ReducedFlow<T>, p0: &ScaledGaussian<T>, cfg: &FlowConfig) -> Result<Trajectory<T>> {
    cfg.validate()?;
    if p0.dim() != flow.dim() {
        return Err(Error::dim(format!("initial point has dimension {}, flow has {}", p0.dim(), flow.dim())));
    }
    let eigen_whitener = if cfg.track_eigen {
        let t = flow
            .gaussian_target()
            .ok_or_else(|| Error::config("eigenvalue tracking requires a Gaussian target"))?;
        Some(linalg::inv_sqrt_spd(t.gamma()))
    } else {
        None
    };
    let mass = flow.mass();
    let mut p0 = p0.clone();
    if mass == MassDynamics::Normalized && p0.kappa() != T::one() {
        p0 = p0.with_kappa(T::one())?;
    }
    let total = |e: &EnergySplit<T>, k: T| match mass {
        MassDynamics::Normalized => e.shape(),
        MassDynamics::Scaled => e.total(k),
    };

    let mut traj = Trajectory {
        times: vec![T::zero()],
        points: vec![p0.clone()],
        energy: vec![flow.energy(&p0)?],
        dissipation: vec![flow.dissipation(&p0)?],
        eigen: None,
        mass,
        halvings: 0,
    };
    let mut eig_vecs = None;
    if let Some(g) = &eigen_whitener {
        let (vals, vecs) = linalg::sym_eigen(&(g * p0.sigma() * g));
        traj.eigen = Some(vec![vals]);
        eig_vecs = Some(vecs);
    }

    let n_steps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = lit::<T>(cfg.dt);
    let t_end = lit::<T>(cfg.t_end);
    let rk4 = cfg.integrator == Integrator::Rk4;
    let exact = flow.energy_is_exact();
    let mut state = RawPoint { sigma: p0.sigma().clone(), m: p0.mean().clone(), kappa: p0.kappa() };
    let mut e_prev = total(&traj.energy[0], p0.kappa());

    for step in 1..=n_steps {
        let t0 = dt * T::from_usize_lossy(step - 1);
        let t1 = if step == n_steps { t_end } else { dt * T::from_usize_lossy(step) };
        let h = t1 - t0;
        let mut rhs = |s: &RawPoint<T>| flow.velocity(&to_point(s)?);
        let (next, halved) = guarded_step(&state, h, rk4, &mut rhs, &admissible, t0)?;
        traj.halvings += halved;
        state = next;
        let p = to_point(&state).map_err(|e| Error::Integration { time: t1.to_f64_lossy(), reason: e.to_string() })?;
        let energy = flow.energy(&p)?;
        let e_now = total(&energy, p.kappa());
        if !e_now.is_finite() {
            return Err(Error::Integration { time: t1.to_f64_lossy(), reason: "energy is not finite".into() });
        }
        if let (true, Some(slack)) = (exact, cfg.monotonicity_slack) {
            if e_now > e_prev + lit::<T>(slack) * (T::one() + e_prev.abs()) {
                return Err(Error::Monotonicity {
                    time: t1.to_f64_lossy(),
                    before: e_prev.to_f64_lossy(),
                    after: e_now.to_f64_lossy(),
                });
            }
        }
        e_prev = e_now;

        let mut tracked = None;
        if let (Some(g), Some(prev)) = (&eigen_whitener, &eig_vecs) {
            let (vals, vecs) = linalg::sym_eigen(&(g * p.sigma() * g));
            let (vals, vecs) = match_by_overlap(prev, &vals, &vecs);
            eig_vecs = Some(vecs);
            tracked = Some(vals);
        }

        if step % cfg.record_every == 0 || step == n_steps {
            traj.times.push(t1);
            traj.dissipation.push(flow.dissipation(&p)?);
            traj.energy.push(energy);
            traj.points.push(p);
            if let (Some(list), Some(v)) = (traj.eigen.as_mut(), tracked) {
                list.push(v);
            }
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug)]
struct RawSimple<T: Scalar> {
    a: Mat<T>,
    b: Vector<T>,
    c: T,
}

impl<T: Scalar> OdeState<T> for RawSimple<T> {
    type Deriv = SimpleTangent<T>;
    fn advance(&self, h: T, d: &SimpleTangent<T>) -> Self {
        RawSimple { a: &self.a + &d.da * h, b: &self.b + &d.db * h, c: self.c + d.dc * h }
    }
}

#[derive(Clone, Debug)]
pub struct SimpleTrajectory<T: Scalar> {
    pub times: Vec<T>,
    pub points: Vec<SimpleCoords<T>>,
}

/// Integrates the flow in exponent coordinates (A, b, c).
pub fn integrate_simple<T: Scalar>(
    q0: &SimpleCoords<T>,
    q_bar: &SimpleCoords<T>,
    cfg: &FlowConfig,
) -> Result<SimpleTrajectory<T>> {
    cfg.validate()?;
    if q0.dim() != q_bar.dim() {
        return Err(Error::dim("state and target dimensions differ"));
    }
    let (alpha, beta) = (lit::<T>(cfg.alpha), lit::<T>(cfg.beta));
    let n_steps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = lit::<T>(cfg.dt);
    let t_end = lit::<T>(cfg.t_end);
    let rk4 = cfg.integrator == Integrator::Rk4;
    let mut state = RawSimple { a: q0.a().clone(), b: q0.b().clone(), c: q0.c() };
    let mut out = SimpleTrajectory { times: vec![T::zero()], points: vec![q0.clone()] };
    let accept = |s: &RawSimple<T>| s.c.is_finite() && linalg::cholesky(&s.a, "A").is_ok();
    for step in 1..=n_steps {
        let t0 = dt * T::from_usize_lossy(step - 1);
        let t1 = if step == n_steps { t_end } else { dt * T::from_usize_lossy(step) };
        let mut rhs = |s: &RawSimple<T>| Ok(rhs_simple_raw(alpha, beta, &s.a, &s.b, s.c, q_bar));
        let (next, _) = guarded_step(&state, t1 - t0, rk4, &mut rhs, &accept, t0)?;
        state = next;
        if step % cfg.record_every == 0 || step == n_steps {
            out.times.push(t1);
            out.points.push(SimpleCoords::new(state.a.clone(), state.b.clone(), state.c)?);
        }
    }
    Ok(out)
}
