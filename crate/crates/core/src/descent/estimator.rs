//! Estimators for Gaussian expectations of V, ∇V and ∇²V.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::descent::potential::{Moments, Potential};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::scalar::{lit, Scalar};

/// Largest dimension supported by the tensorized Gauss–Hermite rule.
pub const GAUSS_HERMITE_MAX_DIM: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    #[default]
    ExactGaussian,
    MonteCarlo {
        n_mc: usize,
        #[serde(default)]
        antithetic: bool,
    },
    GaussHermite {
        nodes_per_dim: usize,
    },
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorConfig::ExactGaussian => Ok(()),
            EstimatorConfig::MonteCarlo { n_mc, .. } if *n_mc == 0 => Err(Error::config("n_mc must be at least 1")),
            EstimatorConfig::GaussHermite { nodes_per_dim } if *nodes_per_dim == 0 => {
                Err(Error::config("nodes_per_dim must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub enum MomentEstimator<T: Scalar> {
    /// Closed form supplied by the potential.
    Exact,
    MonteCarlo { n_mc: usize, antithetic: bool, rng: ChaCha8Rng },
    /// Standard-normal nodes and weights of a one-dimensional rule.
    GaussHermite { nodes: Vec<T>, weights: Vec<T> },
}

impl<T: Scalar> MomentEstimator<T> {
    pub fn from_config(cfg: &EstimatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(match *cfg {
            EstimatorConfig::ExactGaussian => MomentEstimator::Exact,
            EstimatorConfig::MonteCarlo { n_mc, antithetic } => MomentEstimator::MonteCarlo {
                n_mc,
                antithetic,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            EstimatorConfig::GaussHermite { nodes_per_dim } => {
                let (nodes, weights) = gauss_hermite_rule::<T>(nodes_per_dim);
                MomentEstimator::GaussHermite { nodes, weights }
            }
        })
    }

    pub fn monte_carlo(n_mc: usize, antithetic: bool, seed: u64) -> Self {
        MomentEstimator::MonteCarlo { n_mc, antithetic, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn gauss_hermite(nodes_per_dim: usize) -> Self {
        let (nodes, weights) = gauss_hermite_rule::<T>(nodes_per_dim);
        MomentEstimator::GaussHermite { nodes, weights }
    }

    pub fn estimate(&mut self, pot: &dyn Potential<T>, sigma: &Mat<T>, m: &Vector<T>) -> Result<Moments<T>> {
        let d = m.len();
        if pot.dim() != d || sigma.nrows() != d {
            return Err(Error::dim(format!("potential has dimension {}, Gaussian has {d}", pot.dim())));
        }
        match self {
            MomentEstimator::Exact => pot
                .gaussian_moments(sigma, m)
                .ok_or_else(|| Error::config("exact moments are only available for Gaussian-quadratic potentials")),
            MomentEstimator::MonteCarlo { n_mc, antithetic, rng } => {
                let root = linalg::sqrt_spd(sigma);
                let mut acc = Accumulator::new(d);
                let draws = if *antithetic { n_mc.div_ceil(2) } else { *n_mc };
                for _ in 0..draws {
                    let z = Vector::<T>::from_fn(d, |_, _| lit(StandardNormal.sample(rng)));
                    let dz = &root * &z;
                    acc.add(pot, &(m + &dz), T::one())?;
                    if *antithetic {
                        acc.add(pot, &(m - &dz), T::one())?;
                    }
                }
                Ok(acc.finish())
            }
            MomentEstimator::GaussHermite { nodes, weights } => {
                if d > GAUSS_HERMITE_MAX_DIM {
                    return Err(Error::config(format!(
                        "Gauss-Hermite quadrature supports d <= {GAUSS_HERMITE_MAX_DIM}, got {d}"
                    )));
                }
                let root = linalg::sqrt_spd(sigma);
                let k = nodes.len();
                let mut acc = Accumulator::new(d);
                let mut idx = vec![0usize; d];
                loop {
                    let z = Vector::<T>::from_fn(d, |i, _| nodes[idx[i]]);
                    let w = idx.iter().fold(T::one(), |w, &i| w * weights[i]);
                    acc.add(pot, &(m + &root * z), w)?;
                    let mut pos = 0;
                    while pos < d {
                        idx[pos] += 1;
                        if idx[pos] < k {
                            break;
                        }
                        idx[pos] = 0;
                        pos += 1;
                    }
                    if pos == d {
                        break;
                    }
                }
                Ok(acc.finish())
            }
        }
    }
}

struct Accumulator<T: Scalar> {
    w: T,
    v: T,
    g: Vector<T>,
    h: Mat<T>,
}

impl<T: Scalar> Accumulator<T> {
    fn new(d: usize) -> Self {
        Accumulator { w: T::zero(), v: T::zero(), g: Vector::zeros(d), h: Mat::zeros(d, d) }
    }

    fn add(&mut self, pot: &dyn Potential<T>, x: &Vector<T>, w: T) -> Result<()> {
        let (v, g, h) = pot.eval_all(x);
        let sample = || linalg::to_f64_vec(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { what: "potential value", sample: sample() });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { what: "potential gradient", sample: sample() });
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { what: "potential Hessian", sample: sample() });
        }
        self.w += w;
        self.v += v * w;
        self.g += g * w;
        self.h += h * w;
        Ok(())
    }

    fn finish(self) -> Moments<T> {
        let inv = T::one() / self.w;
        Moments { e_v: self.v * inv, e_grad: self.g * inv, e_hess: linalg::symmetrize(&(self.h * inv)) }
    }
}

/// Golub–Welsch rule for the standard normal weight: nodes are the eigenvalues
/// of the Jacobi matrix with off-diagonal √k, weights the squared first
/// eigenvector components.
pub fn gauss_hermite_rule<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut j = Mat::<f64>::zeros(n, n);
    for k in 1..n {
        let v = (k as f64).sqrt();
        j[(k - 1, k)] = v;
        j[(k, k - 1)] = v;
    }
    let (vals, vecs) = linalg::sym_eigen(&j);
    let nodes = vals.iter().map(|x| lit(*x)).collect();
    let weights = (0..n).map(|i| lit(vecs[(0, i)] * vecs[(0, i)])).collect();
    (nodes, weights)
}
