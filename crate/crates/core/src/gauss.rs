//! Scaled Gaussian measures, their two coordinate systems, and the
//! Hellinger–Kantorovich relative entropy towards a Gaussian target.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_nested, Mat, Vector};
use crate::onsager::Cotangent;
use crate::scalar::{lit, Scalar};

/// κ · N(m, Σ): a Gaussian density with total mass κ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "ScaledGaussianRepr<T>", into = "ScaledGaussianRepr<T>")]
pub struct ScaledGaussian<T: Scalar> {
    sigma: Mat<T>,
    m: Vector<T>,
    kappa: T,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct ScaledGaussianRepr<T: Scalar> {
    #[serde(with = "serde_nested::matrix")]
    sigma: Mat<T>,
    #[serde(with = "serde_nested::vector")]
    m: Vector<T>,
    #[serde(default = "T::one")]
    kappa: T,
}

impl<T: Scalar> TryFrom<ScaledGaussianRepr<T>> for ScaledGaussian<T> {
    type Error = Error;
    fn try_from(r: ScaledGaussianRepr<T>) -> Result<Self> {
        ScaledGaussian::new(r.sigma, r.m, r.kappa)
    }
}

impl<T: Scalar> From<ScaledGaussian<T>> for ScaledGaussianRepr<T> {
    fn from(p: ScaledGaussian<T>) -> Self {
        ScaledGaussianRepr { sigma: p.sigma, m: p.m, kappa: p.kappa }
    }
}

impl<T: Scalar> ScaledGaussian<T> {
    pub fn new(sigma: Mat<T>, m: Vector<T>, kappa: T) -> Result<Self> {
        let sigma = linalg::ingest_symmetric(sigma, "Sigma")?;
        linalg::check_vec_len(&m, sigma.nrows(), "m")?;
        if !(kappa > T::zero()) || !kappa.is_finite() {
            return Err(Error::domain(format!("kappa must be positive and finite, got {kappa}")));
        }
        linalg::cholesky(&sigma, "Sigma")?;
        Ok(ScaledGaussian { sigma, m, kappa })
    }

    /// Probability measure (κ = 1).
    pub fn normalized(sigma: Mat<T>, m: Vector<T>) -> Result<Self> {
        Self::new(sigma, m, T::one())
    }

    pub fn standard(d: usize) -> Self {
        ScaledGaussian { sigma: Mat::identity(d, d), m: Vector::zeros(d), kappa: T::one() }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn sigma(&self) -> &Mat<T> {
        &self.sigma
    }

    pub fn mean(&self) -> &Vector<T> {
        &self.m
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn with_kappa(&self, kappa: T) -> Result<Self> {
        Self::new(self.sigma.clone(), self.m.clone(), kappa)
    }

    pub fn into_parts(self) -> (Mat<T>, Vector<T>, T) {
        (self.sigma, self.m, self.kappa)
    }

    /// Σ⁻¹.
    pub fn precision(&self) -> Result<Mat<T>> {
        linalg::spd_inverse(&self.sigma, "Sigma")
    }

    pub fn log_det_sigma(&self) -> Result<T> {
        Ok(linalg::log_det_chol(&linalg::cholesky(&self.sigma, "Sigma")?))
    }

    /// Differential entropy of the normalized shape, ½ ln det(2πe Σ).
    pub fn shape_entropy(&self) -> Result<T> {
        let d = T::from_usize_lossy(self.dim());
        Ok(lit::<T>(0.5) * (d * lit::<T>((2.0 * PI).ln() + 1.0) + self.log_det_sigma()?))
    }

    pub fn to_f32(&self) -> ScaledGaussian<f32> {
        ScaledGaussian {
            sigma: self.sigma.map(|x| x.to_f64_lossy() as f32),
            m: self.m.map(|x| x.to_f64_lossy() as f32),
            kappa: self.kappa.to_f64_lossy() as f32,
        }
    }

    pub fn to_f64(&self) -> ScaledGaussian<f64> {
        ScaledGaussian {
            sigma: self.sigma.map(|x| x.to_f64_lossy()),
            m: self.m.map(|x| x.to_f64_lossy()),
            kappa: self.kappa.to_f64_lossy(),
        }
    }
}

/// Exponent coordinates: the density is exp(−½ x·Ax + b·x + c).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "SimpleCoordsRepr<T>", into = "SimpleCoordsRepr<T>")]
pub struct SimpleCoords<T: Scalar> {
    a: Mat<T>,
    b: Vector<T>,
    c: T,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct SimpleCoordsRepr<T: Scalar> {
    #[serde(rename = "A", with = "serde_nested::matrix")]
    a: Mat<T>,
    #[serde(with = "serde_nested::vector")]
    b: Vector<T>,
    c: T,
}

impl<T: Scalar> TryFrom<SimpleCoordsRepr<T>> for SimpleCoords<T> {
    type Error = Error;
    fn try_from(r: SimpleCoordsRepr<T>) -> Result<Self> {
        SimpleCoords::new(r.a, r.b, r.c)
    }
}

impl<T: Scalar> From<SimpleCoords<T>> for SimpleCoordsRepr<T> {
    fn from(q: SimpleCoords<T>) -> Self {
        SimpleCoordsRepr { a: q.a, b: q.b, c: q.c }
    }
}

impl<T: Scalar> SimpleCoords<T> {
    pub fn new(a: Mat<T>, b: Vector<T>, c: T) -> Result<Self> {
        let a = linalg::ingest_symmetric(a, "A")?;
        linalg::check_vec_len(&b, a.nrows(), "b")?;
        if !c.is_finite() {
            return Err(Error::domain("c must be finite"));
        }
        linalg::cholesky(&a, "A")?;
        Ok(SimpleCoords { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &Mat<T> {
        &self.a
    }

    pub fn b(&self) -> &Vector<T> {
        &self.b
    }

    pub fn c(&self) -> T {
        self.c
    }
}

/// Target measure ϰ · N(n, Γ), with the precision and a whitening factor cached.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "GaussianTargetRepr<T>", into = "GaussianTargetRepr<T>")]
pub struct GaussianTarget<T: Scalar> {
    gamma: Mat<T>,
    n: Vector<T>,
    varkappa: T,
    gamma_inv: Mat<T>,
    log_det_gamma: T,
    /// L⁻¹ with Γ = L Lᵀ.
    l_inv: Mat<T>,
}

impl<T: Scalar> PartialEq for GaussianTarget<T> {
    fn eq(&self, o: &Self) -> bool {
        self.gamma == o.gamma && self.n == o.n && self.varkappa == o.varkappa
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct GaussianTargetRepr<T: Scalar> {
    #[serde(with = "serde_nested::matrix")]
    gamma: Mat<T>,
    #[serde(with = "serde_nested::vector")]
    n: Vector<T>,
    #[serde(default = "T::one")]
    varkappa: T,
}

impl<T: Scalar> TryFrom<GaussianTargetRepr<T>> for GaussianTarget<T> {
    type Error = Error;
    fn try_from(r: GaussianTargetRepr<T>) -> Result<Self> {
        GaussianTarget::new(r.gamma, r.n, r.varkappa)
    }
}

impl<T: Scalar> From<GaussianTarget<T>> for GaussianTargetRepr<T> {
    fn from(t: GaussianTarget<T>) -> Self {
        GaussianTargetRepr { gamma: t.gamma, n: t.n, varkappa: t.varkappa }
    }
}

impl<T: Scalar> GaussianTarget<T> {
    pub fn new(gamma: Mat<T>, n: Vector<T>, varkappa: T) -> Result<Self> {
        let gamma = linalg::ingest_symmetric(gamma, "Gamma")?;
        linalg::check_vec_len(&n, gamma.nrows(), "n")?;
        if !(varkappa > T::zero()) || !varkappa.is_finite() {
            return Err(Error::domain(format!("varkappa must be positive and finite, got {varkappa}")));
        }
        let chol = linalg::cholesky(&gamma, "Gamma")?;
        let log_det_gamma = linalg::log_det_chol(&chol);
        let gamma_inv = linalg::symmetrize(&chol.inverse());
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&Mat::identity(gamma.nrows(), gamma.nrows()))
            .ok_or_else(|| Error::Numerical("triangular solve for Gamma failed".into()))?;
        Ok(GaussianTarget { gamma, n, varkappa, gamma_inv, log_det_gamma, l_inv })
    }

    pub fn probability(gamma: Mat<T>, n: Vector<T>) -> Result<Self> {
        Self::new(gamma, n, T::one())
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn gamma(&self) -> &Mat<T> {
        &self.gamma
    }

    pub fn mean(&self) -> &Vector<T> {
        &self.n
    }

    pub fn varkappa(&self) -> T {
        self.varkappa
    }

    /// Γ⁻¹.
    pub fn precision(&self) -> &Mat<T> {
        &self.gamma_inv
    }

    pub fn log_det_gamma(&self) -> T {
        self.log_det_gamma
    }

    /// L⁻¹ Σ L⁻ᵀ: congruent to Γ^{-1/2} Σ Γ^{-1/2}, with the same eigenvalues.
    pub fn whiten(&self, sigma: &Mat<T>) -> Mat<T> {
        linalg::symmetrize(&(&self.l_inv * sigma * self.l_inv.transpose()))
    }

    /// Γ^{-1/2} Σ Γ^{-1/2} with the symmetric square root.
    pub fn whiten_symmetric(&self, sigma: &Mat<T>) -> Mat<T> {
        let g = linalg::inv_sqrt_spd(&self.gamma);
        linalg::symmetrize(&(&g * sigma * &g))
    }

    pub fn as_measure(&self) -> ScaledGaussian<T> {
        ScaledGaussian { sigma: self.gamma.clone(), m: self.n.clone(), kappa: self.varkappa }
    }

    pub fn simple_coords(&self) -> Result<SimpleCoords<T>> {
        to_simple(&self.as_measure())
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::dim(format!("state has dimension {d}, target has {}", self.dim())));
        }
        Ok(())
    }
}

fn log_two_pi<T: Scalar>() -> T {
    lit((2.0 * PI).ln())
}

/// (Σ, m, κ) from (A, b, c).
pub fn to_standard<T: Scalar>(q: &SimpleCoords<T>) -> Result<ScaledGaussian<T>> {
    let chol = linalg::cholesky(&q.a, "A")?;
    let sigma = linalg::symmetrize(&chol.inverse());
    let m = chol.solve(&q.b);
    let d = T::from_usize_lossy(q.dim());
    let half = lit::<T>(0.5);
    let ln_kappa = half * d * log_two_pi::<T>() - half * linalg::log_det_chol(&chol) + q.c + half * q.b.dot(&m);
    let kappa = ln_kappa.exp();
    if !(kappa > T::zero()) || !kappa.is_finite() {
        return Err(Error::Numerical(format!("mass exp({ln_kappa}) is not representable")));
    }
    ScaledGaussian::new(sigma, m, kappa)
}

/// (A, b, c) from (Σ, m, κ).
pub fn to_simple<T: Scalar>(p: &ScaledGaussian<T>) -> Result<SimpleCoords<T>> {
    let chol = linalg::cholesky(&p.sigma, "Sigma")?;
    let a = linalg::symmetrize(&chol.inverse());
    let b = chol.solve(&p.m);
    let d = T::from_usize_lossy(p.dim());
    let half = lit::<T>(0.5);
    let c = p.kappa.ln() - half * d * log_two_pi::<T>() - half * linalg::log_det_chol(&chol) - half * b.dot(&p.m);
    SimpleCoords::new(a, b, c)
}

pub fn log_density_at<T: Scalar>(p: &ScaledGaussian<T>, x: &Vector<T>) -> Result<T> {
    linalg::check_vec_len(x, p.dim(), "x")?;
    let chol = linalg::cholesky(&p.sigma, "Sigma")?;
    let w = x - &p.m;
    let quad = w.dot(&chol.solve(&w));
    let d = T::from_usize_lossy(p.dim());
    let half = lit::<T>(0.5);
    Ok(p.kappa.ln() - half * (d * log_two_pi::<T>() + linalg::log_det_chol(&chol) + quad))
}

pub fn density_at<T: Scalar>(p: &ScaledGaussian<T>, x: &Vector<T>) -> Result<T> {
    Ok(log_density_at(p, x)?.exp())
}

/// b − 1 − ln b, evaluated without cancellation near b = 1.
pub fn phi<T: Scalar>(b: T) -> T {
    let e = b - T::one();
    if e.abs() < lit(1e-3) {
        let mut acc = T::zero();
        let mut pow = e * e;
        for k in 2..=8 {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            acc += sign * pow / T::from_usize_lossy(k);
            pow *= e;
        }
        acc
    } else {
        e - b.ln()
    }
}

/// r ln r − r + 1, the Boltzmann entropy density.
pub fn lambda_b<T: Scalar>(r: T) -> T {
    if r == T::zero() {
        return T::one();
    }
    let e = r - T::one();
    if e.abs() < lit(1e-3) {
        let mut acc = T::zero();
        let mut pow = e * e;
        for k in 2..=8usize {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            acc += sign * pow / T::from_usize_lossy(k * (k - 1));
            pow *= e;
        }
        acc
    } else {
        r * r.ln() - r + T::one()
    }
}

/// Relative entropy split into covariance, mean and mass parts.
///
/// The full energy is `kappa * (h_cov + h_mean) + mass_term`; for probability
/// measures it reduces to `h_cov + h_mean`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EnergySplit<T: Scalar> {
    pub h_cov: T,
    pub h_mean: T,
    pub mass_term: T,
}

impl<T: Scalar> EnergySplit<T> {
    /// Relative entropy of the normalized shapes.
    pub fn shape(&self) -> T {
        self.h_cov + self.h_mean
    }

    pub fn total(&self, kappa: T) -> T {
        kappa * self.shape() + self.mass_term
    }
}

/// ½ Σ φ(bᵢ) over the eigenvalues of Γ^{-1/2} Σ Γ^{-1/2}.
pub fn covariance_entropy<T: Scalar>(sigma: &Mat<T>, target: &GaussianTarget<T>) -> Result<T> {
    target.check_dim(sigma.nrows())?;
    if sigma == &target.gamma {
        // Whitening rounds the eigenvalues off 1; keep the minimum exact.
        return Ok(T::zero());
    }
    let b = target.whiten(sigma).symmetric_eigenvalues();
    if b.iter().any(|x| !(*x > T::zero())) {
        return Err(Error::NotSpd { what: "Sigma", eigenvalue: linalg::min_eigenvalue(sigma).to_f64_lossy() });
    }
    Ok(lit::<T>(0.5) * b.iter().fold(T::zero(), |acc, x| acc + phi(*x)))
}

/// ½ (m − n)·Γ⁻¹(m − n).
pub fn mean_entropy<T: Scalar>(m: &Vector<T>, target: &GaussianTarget<T>) -> Result<T> {
    linalg::check_vec_len(m, target.dim(), "m")?;
    let w = m - &target.n;
    Ok(lit::<T>(0.5) * w.dot(&(&target.gamma_inv * &w)))
}

pub fn entropy_split<T: Scalar>(p: &ScaledGaussian<T>, target: &GaussianTarget<T>) -> Result<EnergySplit<T>> {
    Ok(EnergySplit {
        h_cov: covariance_entropy(&p.sigma, target)?,
        h_mean: mean_entropy(&p.m, target)?,
        mass_term: target.varkappa * lambda_b(p.kappa / target.varkappa),
    })
}

/// KL divergence of the normalized shapes, H(Σ, m | Γ, n).
pub fn shape_relative_entropy<T: Scalar>(p: &ScaledGaussian<T>, target: &GaussianTarget<T>) -> Result<T> {
    Ok(entropy_split(p, target)?.shape())
}

/// Relative entropy of κN(m, Σ) with respect to ϰN(n, Γ).
pub fn relative_entropy<T: Scalar>(p: &ScaledGaussian<T>, target: &GaussianTarget<T>) -> Result<T> {
    Ok(entropy_split(p, target)?.total(p.kappa))
}

/// Differential of the reduced energy as a cotangent (S, μ, k).
pub fn entropy_differential<T: Scalar>(p: &ScaledGaussian<T>, target: &GaussianTarget<T>) -> Result<Cotangent<T>> {
    let split = entropy_split(p, target)?;
    let half_kappa = p.kappa * lit::<T>(0.5);
    let s = (&target.gamma_inv - p.precision()?) * half_kappa;
    let mu = &target.gamma_inv * (&p.m - &target.n) * p.kappa;
    let k = split.shape() + (p.kappa / target.varkappa).ln();
    Ok(Cotangent::new(linalg::symmetrize(&s), mu, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_target() -> GaussianTarget<f64> {
        GaussianTarget::new(
            Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            Vector::from_vec(vec![0.5, -1.0]),
            1.7,
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_simple_coords() {
        let p = ScaledGaussian::<f64>::standard(1);
        let q = to_simple(&p).unwrap();
        assert_relative_eq!(q.a()[(0, 0)], 1.0);
        assert_relative_eq!(q.b()[0], 0.0);
        assert_relative_eq!(q.c(), -0.5 * (2.0 * PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn roundtrip_2d() {
        let p = ScaledGaussian::new(
            Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            Vector::from_vec(vec![1.0, -2.0]),
            3.0,
        )
        .unwrap();
        let back = to_standard(&to_simple(&p).unwrap()).unwrap();
        assert!((back.sigma() - p.sigma()).norm() < 1e-12);
        assert!((back.mean() - p.mean()).norm() < 1e-12);
        assert_relative_eq!(back.kappa(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn density_matches_exponent_form() {
        let p = ScaledGaussian::new(
            Mat::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.7]),
            Vector::from_vec(vec![0.3, 0.1]),
            2.5,
        )
        .unwrap();
        let q = to_simple(&p).unwrap();
        let x: Vector<f64> = Vector::from_vec(vec![-0.4, 1.2]);
        let expo = (-0.5 * x.dot(&(q.a() * &x)) + q.b().dot(&x) + q.c()).exp();
        assert_relative_eq!(density_at(&p, &x).unwrap(), expo, max_relative = 1e-13);
    }

    #[test]
    fn entropy_zero_at_target() {
        let t = sample_target();
        let e = relative_entropy(&t.as_measure(), &t).unwrap();
        assert!(e.abs() < 1e-14);
    }

    #[test]
    fn covariance_entropy_matches_trace_formula() {
        let t = sample_target();
        let sigma = Mat::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 3.0]);
        let direct = 0.5
            * ((t.precision() * &sigma).trace() - 2.0 - sigma.determinant().ln() + t.gamma().determinant().ln());
        assert_relative_eq!(covariance_entropy(&sigma, &t).unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn phi_series_is_continuous() {
        for e in [9.9e-4, 1.01e-3, -9.9e-4, -1.01e-3] {
            let b: f64 = 1.0 + e;
            let direct = e - b.ln();
            assert_relative_eq!(phi(b), direct, max_relative = 1e-9);
            assert_relative_eq!(lambda_b(b), b * b.ln() - b + 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn differential_matches_finite_differences() {
        let t = sample_target();
        let p = ScaledGaussian::new(
            Mat::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 1.9]),
            Vector::from_vec(vec![1.0, 0.4]),
            0.6,
        )
        .unwrap();
        let dp = entropy_differential(&p, &t).unwrap();
        let h = 1e-6;
        let (sigma, m, kappa) = p.clone().into_parts();
        let f = |s: Mat<f64>, mm: Vector<f64>, k: f64| relative_entropy(&ScaledGaussian::new(s, mm, k).unwrap(), &t).unwrap();
        // Symmetric perturbation E_ij + E_ji pairs with 2 S_ij off the diagonal.
        for i in 0..2 {
            for j in i..2 {
                let mut e = Mat::zeros(2, 2);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                let fd = (f(&sigma + &e * h, m.clone(), kappa) - f(&sigma - &e * h, m.clone(), kappa)) / (2.0 * h);
                let pred = dp.s.dot(&e);
                assert_relative_eq!(fd, pred, max_relative = 1e-6, epsilon = 1e-9);
            }
            let mut v = Vector::zeros(2);
            v[i] = 1.0;
            let fd = (f(sigma.clone(), &m + &v * h, kappa) - f(sigma.clone(), &m - &v * h, kappa)) / (2.0 * h);
            assert_relative_eq!(fd, dp.mu[i], max_relative = 1e-6, epsilon = 1e-9);
        }
        let fd = (f(sigma.clone(), m.clone(), kappa + h) - f(sigma.clone(), m.clone(), kappa - h)) / (2.0 * h);
        assert_relative_eq!(fd, dp.k, max_relative = 1e-6, epsilon = 1e-9);
    }

    #[test]
    fn json_field_names() {
        let p = ScaledGaussian::<f64>::standard(2);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"sigma":[[1.0,0.0],[0.0,1.0]],"m":[0.0,0.0],"kappa":1.0}"#);
        let q = to_simple(&p).unwrap();
        let v: serde_json::Value = serde_json::to_value(&q).unwrap();
        assert!(v.get("A").is_some() && v.get("b").is_some() && v.get("c").is_some());
        let t: GaussianTarget<f64> =
            serde_json::from_str(r#"{"gamma":[[2.0]],"n":[1.0],"varkappa":0.5}"#).unwrap();
        assert_eq!(t.varkappa(), 0.5);
        assert!(serde_json::from_str::<ScaledGaussian<f64>>(r#"{"sigma":[[-1.0]],"m":[0.0]}"#).is_err());
    }

    #[test]
    fn rejects_non_spd_sigma() {
        let r = ScaledGaussian::new(Mat::from_row_slice(1, 1, &[0.0]), Vector::zeros(1), 1.0);
        assert!(matches!(r, Err(Error::NotSpd { .. })));
    }
}
