//! Reduced Onsager operators: the Otto (transport), Hellinger (reaction) and
//! spherical Hellinger blocks restricted to Gaussian parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::ScaledGaussian;
use crate::linalg::{self, serde_nested, Mat, Vector};
use crate::moments::QuadraticPoly;
use crate::scalar::{lit, Scalar};

/// Covector (S, μ, k) dual to (Σ, m, κ); S is symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cotangent<T: Scalar> {
    #[serde(rename = "S", with = "serde_nested::matrix")]
    pub s: Mat<T>,
    #[serde(with = "serde_nested::vector")]
    pub mu: Vector<T>,
    #[serde(default = "T::zero")]
    pub k: T,
}

impl<T: Scalar> Cotangent<T> {
    pub fn new(s: Mat<T>, mu: Vector<T>, k: T) -> Self {
        Cotangent { s, mu, k }
    }

    pub fn checked(s: Mat<T>, mu: Vector<T>, k: T, d: usize) -> Result<Self> {
        let s = linalg::ingest_symmetric(s, "S")?;
        if s.nrows() != d {
            return Err(Error::dim(format!("S is {}x{0}, expected {d}x{d}", s.nrows())));
        }
        linalg::check_vec_len(&mu, d, "mu")?;
        Ok(Cotangent { s, mu, k })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn scaled(&self, a: T) -> Self {
        Cotangent { s: &self.s * a, mu: &self.mu * a, k: self.k * a }
    }

    /// |S|²_F + |μ|² + k².
    pub fn norm_squared(&self) -> T {
        self.s.norm_squared() + self.mu.norm_squared() + self.k * self.k
    }
}

/// Tangent vector (Σ̇, ṁ, κ̇).
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent<T: Scalar> {
    pub d_sigma: Mat<T>,
    pub d_m: Vector<T>,
    pub d_kappa: T,
}

impl<T: Scalar> Tangent<T> {
    pub fn zeros(d: usize) -> Self {
        Tangent { d_sigma: Mat::zeros(d, d), d_m: Vector::zeros(d), d_kappa: T::zero() }
    }

    pub fn scaled(&self, a: T) -> Self {
        Tangent { d_sigma: &self.d_sigma * a, d_m: &self.d_m * a, d_kappa: self.d_kappa * a }
    }

    pub fn add(&self, o: &Self) -> Self {
        Tangent {
            d_sigma: &self.d_sigma + &o.d_sigma,
            d_m: &self.d_m + &o.d_m,
            d_kappa: self.d_kappa + o.d_kappa,
        }
    }

    pub fn norm_squared(&self) -> T {
        self.d_sigma.norm_squared() + self.d_m.norm_squared() + self.d_kappa * self.d_kappa
    }
}

/// Coefficients of ξ(x) = (x−m)·A(x−m) + b·(x−m) + c.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadCoefficients<T: Scalar> {
    pub a: Mat<T>,
    pub b: Vector<T>,
    pub c: T,
}

impl<T: Scalar> QuadCoefficients<T> {
    pub fn eval(&self, m: &Vector<T>, x: &Vector<T>) -> T {
        let w = x - m;
        w.dot(&(&self.a * &w)) + self.b.dot(&w) + self.c
    }

    pub fn gradient(&self, m: &Vector<T>, x: &Vector<T>) -> Vector<T> {
        (&self.a * (x - m)) * lit::<T>(2.0) + &self.b
    }
}

fn check_pair<T: Scalar>(p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<()> {
    if eta.s.nrows() != p.dim() || eta.s.ncols() != p.dim() || eta.mu.len() != p.dim() {
        return Err(Error::dim(format!("cotangent has dimension {}, point has {}", eta.mu.len(), p.dim())));
    }
    Ok(())
}

fn check_weights<T: Scalar>(alpha: T, beta: T) -> Result<()> {
    if !(alpha >= T::zero()) || !(beta >= T::zero()) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::config(format!("alpha and beta must be finite and non-negative, got {alpha}, {beta}")));
    }
    if alpha + beta == T::zero() {
        return Err(Error::config("alpha and beta cannot both vanish"));
    }
    Ok(())
}

pub(crate) fn validate_weights<T: Scalar>(alpha: T, beta: T) -> Result<()> {
    check_weights(alpha, beta)
}

fn otto_parts<T: Scalar>(sigma: &Mat<T>, eta: &Cotangent<T>, inv_kappa: T) -> Tangent<T> {
    let ss = &eta.s * sigma;
    let d_sigma = (&ss + ss.transpose()) * (lit::<T>(2.0) * inv_kappa);
    Tangent { d_sigma: linalg::symmetrize(&d_sigma), d_m: &eta.mu * inv_kappa, d_kappa: T::zero() }
}

fn reaction_parts<T: Scalar>(sigma: &Mat<T>, eta: &Cotangent<T>, inv_kappa: T) -> Tangent<T> {
    let d_sigma = sigma * &eta.s * sigma * (lit::<T>(2.0) * inv_kappa);
    Tangent { d_sigma: linalg::symmetrize(&d_sigma), d_m: sigma * &eta.mu * inv_kappa, d_kappa: T::zero() }
}

/// Transport block: ((2/κ)(SΣ + ΣS), μ/κ, 0).
pub fn apply_otto_red<T: Scalar>(p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<Tangent<T>> {
    check_pair(p, eta)?;
    Ok(otto_parts(p.sigma(), eta, T::one() / p.kappa()))
}

/// Reaction block: ((2/κ)ΣSΣ, Σμ/κ, κk).
pub fn apply_he_red<T: Scalar>(p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<Tangent<T>> {
    check_pair(p, eta)?;
    let mut t = reaction_parts(p.sigma(), eta, T::one() / p.kappa());
    t.d_kappa = p.kappa() * eta.k;
    Ok(t)
}

/// α · transport + β · reaction.
pub fn apply_hk_red<T: Scalar>(alpha: T, beta: T, p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<Tangent<T>> {
    check_weights(alpha, beta)?;
    Ok(apply_otto_red(p, eta)?.scaled(alpha).add(&apply_he_red(p, eta)?.scaled(beta)))
}

/// Normalized operator on probability measures: κ is treated as 1 and k is ignored.
pub fn apply_she_red<T: Scalar>(alpha: T, beta: T, p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<Tangent<T>> {
    check_weights(alpha, beta)?;
    check_pair(p, eta)?;
    let o = otto_parts(p.sigma(), eta, T::one());
    let r = reaction_parts(p.sigma(), eta, T::one());
    Ok(o.scaled(alpha).add(&r.scaled(beta)))
}

/// Duality pairing S:Σ̇ + μ·ṁ + k κ̇.
pub fn pairing<T: Scalar>(eta: &Cotangent<T>, v: &Tangent<T>) -> T {
    eta.s.dot(&v.d_sigma) + eta.mu.dot(&v.d_m) + eta.k * v.d_kappa
}

/// Transport and reaction contributions to ⟨η, Kη⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct FormParts<T: Scalar> {
    pub otto: T,
    pub hellinger: T,
}

impl<T: Scalar> FormParts<T> {
    pub fn combine(&self, alpha: T, beta: T) -> T {
        alpha * self.otto + beta * self.hellinger
    }
}

/// Closed-form quadratic form: (4/κ)tr(S²Σ) + |μ|²/κ and (2/κ)tr(SΣSΣ) + μΣμ/κ + κk².
pub fn form_parts<T: Scalar>(p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<FormParts<T>> {
    check_pair(p, eta)?;
    let inv_k = T::one() / p.kappa();
    let sigma = p.sigma();
    let s_sigma = &eta.s * sigma;
    let otto = (lit::<T>(4.0) * (&eta.s * &s_sigma).trace() + eta.mu.norm_squared()) * inv_k;
    let hellinger = (lit::<T>(2.0) * s_sigma.dot(&s_sigma.transpose()) + eta.mu.dot(&(sigma * &eta.mu))) * inv_k
        + p.kappa() * eta.k * eta.k;
    Ok(FormParts { otto, hellinger })
}

pub fn quadratic_form<T: Scalar>(alpha: T, beta: T, p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<T> {
    check_weights(alpha, beta)?;
    Ok(form_parts(p, eta)?.combine(alpha, beta))
}

/// Normalized quadratic form: κ = 1, k ignored.
pub fn normalized_quadratic_form<T: Scalar>(alpha: T, beta: T, p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<T> {
    check_weights(alpha, beta)?;
    check_pair(p, eta)?;
    let sigma = p.sigma();
    let s_sigma = &eta.s * sigma;
    let otto = lit::<T>(4.0) * (&eta.s * &s_sigma).trace() + eta.mu.norm_squared();
    let she = lit::<T>(2.0) * s_sigma.dot(&s_sigma.transpose()) + eta.mu.dot(&(sigma * &eta.mu));
    Ok(alpha * otto + beta * she)
}

/// Quadratic function ξ whose gradient and value realise η on the Gaussian.
pub fn xi_from_eta<T: Scalar>(p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<QuadCoefficients<T>> {
    check_pair(p, eta)?;
    let inv_k = T::one() / p.kappa();
    Ok(QuadCoefficients {
        a: &eta.s * inv_k,
        b: &eta.mu * inv_k,
        c: eta.k - (&eta.s * p.sigma()).trace() * inv_k,
    })
}

/// κ E|∇ξ|² and κ E[ξ²] under N(m, Σ), computed from standard-normal moments.
pub fn full_onsager_form<T: Scalar>(p: &ScaledGaussian<T>, eta: &Cotangent<T>) -> Result<FormParts<T>> {
    let xi = xi_from_eta(p, eta)?;
    let root = linalg::sqrt_spd(p.sigma());
    let four = lit::<T>(4.0);
    // ∇ξ(m + Σ^{1/2}y) = 2AΣ^{1/2}y + b.
    let grad_sq = QuadraticPoly {
        p: linalg::symmetrize(&(&root * &xi.a * &xi.a * &root * four)),
        q: &root * &xi.a * &xi.b * four,
        r: xi.b.norm_squared(),
    };
    let value = QuadraticPoly {
        p: linalg::symmetrize(&(&root * &xi.a * &root)),
        q: &root * &xi.b,
        r: xi.c,
    };
    Ok(FormParts { otto: p.kappa() * grad_sq.mean(), hellinger: p.kappa() * value.mean_square() })
}
