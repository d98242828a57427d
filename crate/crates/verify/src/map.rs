//! Independent logistic-regression objective and a damped Newton solver for
//! its minimizer, used as the oracle for the descent mean.

use nalgebra::{DMatrix, DVector};

/// V(θ) = s Σᵢ [ln(1 + e^{zᵢ}) − yᵢzᵢ] + (ρ/2)|θ|², zᵢ = xᵢ·θ (+ θ₀ as the last coordinate).
pub struct LogisticOracle {
    design: DMatrix<f64>,
    labels: DVector<f64>,
    scale: f64,
    prior_precision: f64,
}

impl LogisticOracle {
    pub fn new(features: &DMatrix<f64>, labels: &[f64], reg_lambda: f64, intercept: bool, prior_precision: f64) -> Self {
        let n = features.nrows();
        let design = if intercept { features.clone().insert_column(features.ncols(), 1.0) } else { features.clone() };
        LogisticOracle {
            design,
            labels: DVector::from_column_slice(labels),
            scale: 1.0 / (n as f64 * reg_lambda),
            prior_precision,
        }
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let z = &self.design * theta;
        let nll: f64 = z
            .iter()
            .zip(self.labels.iter())
            .map(|(&z, &y)| if z > 0.0 { z + (-z).exp().ln_1p() - y * z } else { z.exp().ln_1p() - y * z })
            .sum();
        self.scale * nll + 0.5 * self.prior_precision * theta.norm_squared()
    }

    pub fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let z = &self.design * theta;
        let p = z.map(|z| 0.5 * (1.0 + (0.5 * z).tanh()));
        let resid = &p - &self.labels;
        let g = self.design.transpose() * resid * self.scale + theta * self.prior_precision;
        let w = p.map(|p| p * (1.0 - p));
        let weighted = DMatrix::from_fn(self.design.nrows(), self.design.ncols(), |i, j| w[i] * self.design[(i, j)]);
        let h = self.design.transpose() * weighted * self.scale
            + DMatrix::identity(self.dim(), self.dim()) * self.prior_precision;
        (g, h)
    }
}

/// Newton iterations with Armijo backtracking, from θ = 0.
/// Returns the minimizer and the final gradient norm.
pub fn damped_newton_map(v: &LogisticOracle, tol: f64, max_iter: usize) -> Option<(DVector<f64>, f64)> {
    let mut theta = DVector::zeros(v.dim());
    for _ in 0..max_iter {
        let (g, h) = v.gradient_hessian(&theta);
        let gnorm = g.norm();
        if gnorm <= tol {
            return Some((theta, gnorm));
        }
        let step = h.cholesky()?.solve(&g);
        let (f0, slope) = (v.value(&theta), g.dot(&step));
        let mut t = 1.0;
        while v.value(&(&theta - &step * t)) > f0 - 1e-4 * t * slope {
            t *= 0.5;
            if t < 1e-12 {
                return None;
            }
        }
        theta -= step * t;
    }
    let (g, _) = v.gradient_hessian(&theta);
    (g.norm() <= tol).then(|| (theta, g.norm()))
}
