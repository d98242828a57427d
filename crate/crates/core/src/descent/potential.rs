//! Target potentials V with π ∝ e^{−V}.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::GaussianTarget;
use crate::linalg::{self, Mat, Vector};
use crate::scalar::{lit, Scalar};

/// Gaussian expectations E[V], E[∇V], E[∇²V].
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T: Scalar> {
    pub e_v: T,
    pub e_grad: Vector<T>,
    pub e_hess: Mat<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    GaussianQuadratic,
    LogisticRegression,
    Custom,
}

pub trait Potential<T: Scalar>: Send + Sync {
    fn kind(&self) -> PotentialKind;
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector<T>) -> T;
    fn gradient(&self, x: &Vector<T>) -> Vector<T>;
    fn hessian(&self, x: &Vector<T>) -> Mat<T>;

    /// Value, gradient and Hessian together; override to share work.
    fn eval_all(&self, x: &Vector<T>) -> (T, Vector<T>, Mat<T>) {
        (self.value(x), self.gradient(x), self.hessian(x))
    }

    /// ln ∫ e^{−V} dx when known in closed form.
    fn log_normalizer(&self) -> Option<T> {
        None
    }

    /// Total mass ϰ of the target measure ϰ e^{−V}/Z.
    fn target_mass(&self) -> T {
        T::one()
    }

    /// λ > 0 such that V − λ|x|²/2 is convex, if known.
    fn lambda_convexity(&self) -> Option<T> {
        None
    }

    /// Closed-form Gaussian expectations, if available.
    fn gaussian_moments(&self, _sigma: &Mat<T>, _m: &Vector<T>) -> Option<Moments<T>> {
        None
    }
}

/// V(x) = ½(x − n)·Γ⁻¹(x − n), the potential of a Gaussian target.
#[derive(Clone, Debug)]
pub struct QuadraticPotential<T: Scalar> {
    pub target: GaussianTarget<T>,
}

impl<T: Scalar> QuadraticPotential<T> {
    pub fn new(target: GaussianTarget<T>) -> Self {
        QuadraticPotential { target }
    }
}

impl<T: Scalar> Potential<T> for QuadraticPotential<T> {
    fn kind(&self) -> PotentialKind {
        PotentialKind::GaussianQuadratic
    }
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn value(&self, x: &Vector<T>) -> T {
        let w = x - self.target.mean();
        lit::<T>(0.5) * w.dot(&(self.target.precision() * &w))
    }
    fn gradient(&self, x: &Vector<T>) -> Vector<T> {
        self.target.precision() * (x - self.target.mean())
    }
    fn hessian(&self, _x: &Vector<T>) -> Mat<T> {
        self.target.precision().clone()
    }
    fn log_normalizer(&self) -> Option<T> {
        let d = T::from_usize_lossy(self.dim());
        Some(lit::<T>(0.5) * (d * lit::<T>((2.0 * PI).ln()) + self.target.log_det_gamma()))
    }
    fn target_mass(&self) -> T {
        self.target.varkappa()
    }
    fn lambda_convexity(&self) -> Option<T> {
        Some(linalg::min_eigenvalue(self.target.precision()))
    }
    fn gaussian_moments(&self, sigma: &Mat<T>, m: &Vector<T>) -> Option<Moments<T>> {
        let gi = self.target.precision();
        let w = m - self.target.mean();
        let g = gi * &w;
        Some(Moments {
            e_v: lit::<T>(0.5) * ((gi * sigma).trace() + w.dot(&g)),
            e_grad: g,
            e_hess: gi.clone(),
        })
    }
}

/// Potential given by closures.
pub struct FnPotential<T: Scalar> {
    pub dim: usize,
    pub value: Box<dyn Fn(&Vector<T>) -> T + Send + Sync>,
    pub gradient: Box<dyn Fn(&Vector<T>) -> Vector<T> + Send + Sync>,
    pub hessian: Box<dyn Fn(&Vector<T>) -> Mat<T> + Send + Sync>,
    pub log_normalizer: Option<T>,
}

impl<T: Scalar> Potential<T> for FnPotential<T> {
    fn kind(&self) -> PotentialKind {
        PotentialKind::Custom
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector<T>) -> T {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vector<T>) -> Vector<T> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &Vector<T>) -> Mat<T> {
        (self.hessian)(x)
    }
    fn log_normalizer(&self) -> Option<T> {
        self.log_normalizer
    }
}

/// Binary-labelled samples for logistic regression.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticData {
    /// N × d feature matrix, one row per sample.
    pub features: Mat<f64>,
    pub labels: Vec<f64>,
}

impl LogisticData {
    pub fn new(features: Mat<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::domain(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::domain("logistic data needs at least one sample"));
        }
        if let Some(bad) = labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::domain(format!("labels must be 0 or 1, found {bad}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("features must be finite"));
        }
        Ok(LogisticData { features, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Reads a CSV with header `x_1, …, x_d, y`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        let y_col = header
            .iter()
            .position(|h| h.trim() == "y")
            .ok_or_else(|| Error::config(format!("{}: missing `y` column", path.display())))?;
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        for (i, h) in header.iter().enumerate() {
            let h = h.trim();
            if i == y_col {
                continue;
            }
            let k = h
                .strip_prefix("x_")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::config(format!("{}: unexpected column `{h}`", path.display())))?;
            x_cols.push((k, i));
        }
        x_cols.sort();
        if x_cols.iter().enumerate().any(|(j, (k, _))| *k != j + 1) {
            return Err(Error::config(format!("{}: feature columns must be x_1..x_d", path.display())));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| {
                    Error::config(format!("{}: row {}: column {}: {e}", path.display(), line + 2, i + 1))
                })
            };
            labels.push(parse(y_col)?);
            for &(_, i) in &x_cols {
                rows.push(parse(i)?);
            }
        }
        let features = Mat::from_row_slice(labels.len(), x_cols.len(), &rows);
        Self::new(features, labels)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.n_features();
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut row: Vec<String> = (0..d).map(|j| format!("{:e}", self.features[(i, j)])).collect();
            row.push(format!("{}", self.labels[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Standard-normal features with labels drawn from the logistic model.
    pub fn synthetic(n: usize, theta: &[f64], intercept: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = theta.len();
        let mut features = Mat::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let mut z = intercept;
            for j in 0..d {
                let x: f64 = StandardNormal.sample(&mut rng);
                features[(i, j)] = x;
                z += theta[j] * x;
            }
            let p = sigmoid(z);
            labels.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        Self::new(features, labels)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eᶻ) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// V(θ) = (1/(Nλ)) Σᵢ [−yᵢ zᵢ + ln(1 + e^{zᵢ})] + (ρ/2)|θ|² with zᵢ = θ·xᵢ + θ₀.
///
/// With an intercept, θ₀ is the last coordinate of θ.
#[derive(Clone, Debug)]
pub struct LogisticPotential {
    data: LogisticData,
    scale: f64,
    intercept: bool,
    prior_precision: f64,
}

impl LogisticPotential {
    pub fn new(data: LogisticData, reg_lambda: f64, include_intercept: bool, prior_precision: f64) -> Result<Self> {
        if !(reg_lambda > 0.0) || !reg_lambda.is_finite() {
            return Err(Error::domain(format!("reg_lambda must be positive, got {reg_lambda}")));
        }
        if !(prior_precision >= 0.0) || !prior_precision.is_finite() {
            return Err(Error::domain(format!("prior_precision must be non-negative, got {prior_precision}")));
        }
        let scale = 1.0 / (data.n_samples() as f64 * reg_lambda);
        Ok(LogisticPotential { data, scale, intercept: include_intercept, prior_precision })
    }

    pub fn data(&self) -> &LogisticData {
        &self.data
    }

    fn logit(&self, i: usize, theta: &[f64]) -> f64 {
        let d = self.data.n_features();
        let row = self.data.features.row(i);
        let mut z: f64 = (0..d).map(|j| row[j] * theta[j]).sum();
        if self.intercept {
            z += theta[d];
        }
        z
    }

    fn feature(&self, i: usize, j: usize) -> f64 {
        if j < self.data.n_features() {
            self.data.features[(i, j)]
        } else {
            1.0
        }
    }

    fn eval_f64(&self, theta: &[f64], want_grad: bool, want_hess: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let p = theta.len();
        let mut v = 0.0;
        let mut g = vec![0.0; if want_grad { p } else { 0 }];
        let mut h = vec![0.0; if want_hess { p * p } else { 0 }];
        let mut xi = vec![0.0; p];
        for i in 0..self.data.n_samples() {
            let z = self.logit(i, theta);
            let y = self.data.labels[i];
            v += softplus(z) - y * z;
            if !(want_grad || want_hess) {
                continue;
            }
            for (j, x) in xi.iter_mut().enumerate() {
                *x = self.feature(i, j);
            }
            let s = sigmoid(z);
            if want_grad {
                for j in 0..p {
                    g[j] += (s - y) * xi[j];
                }
            }
            if want_hess {
                let w = s * (1.0 - s);
                for a in 0..p {
                    let wa = w * xi[a];
                    for b in a..p {
                        h[a * p + b] += wa * xi[b];
                    }
                }
            }
        }
        let rho = self.prior_precision;
        v = self.scale * v + 0.5 * rho * theta.iter().map(|t| t * t).sum::<f64>();
        for j in 0..g.len() {
            g[j] = self.scale * g[j] + rho * theta[j];
        }
        if want_hess {
            for a in 0..p {
                for b in a..p {
                    let val = self.scale * h[a * p + b] + if a == b { rho } else { 0.0 };
                    h[a * p + b] = val;
                    h[b * p + a] = val;
                }
            }
        }
        (v, g, h)
    }
}

fn to_f64s<T: Scalar>(x: &Vector<T>) -> Vec<f64> {
    x.iter().map(|v| v.to_f64_lossy()).collect()
}

impl<T: Scalar> Potential<T> for LogisticPotential {
    fn kind(&self) -> PotentialKind {
        PotentialKind::LogisticRegression
    }
    fn dim(&self) -> usize {
        self.data.n_features() + usize::from(self.intercept)
    }
    fn value(&self, x: &Vector<T>) -> T {
        lit(self.eval_f64(&to_f64s(x), false, false).0)
    }
    fn gradient(&self, x: &Vector<T>) -> Vector<T> {
        let (_, g, _) = self.eval_f64(&to_f64s(x), true, false);
        Vector::from_iterator(g.len(), g.into_iter().map(lit))
    }
    fn hessian(&self, x: &Vector<T>) -> Mat<T> {
        let p = x.len();
        let (_, _, h) = self.eval_f64(&to_f64s(x), false, true);
        Mat::from_iterator(p, p, h.into_iter().map(lit))
    }
    fn eval_all(&self, x: &Vector<T>) -> (T, Vector<T>, Mat<T>) {
        let p = x.len();
        let (v, g, h) = self.eval_f64(&to_f64s(x), true, true);
        (
            lit(v),
            Vector::from_iterator(p, g.into_iter().map(lit)),
            Mat::from_iterator(p, p, h.into_iter().map(lit)),
        )
    }
    fn lambda_convexity(&self) -> Option<T> {
        (self.prior_precision > 0.0).then(|| lit(self.prior_precision))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn potential() -> LogisticPotential {
        let data = LogisticData::synthetic(50, &[1.0, -0.5], 0.3, 3).unwrap();
        LogisticPotential::new(data, 0.02, true, 0.1).unwrap()
    }

    #[test]
    fn zero_parameters_give_ln2() {
        let data = LogisticData::synthetic(10, &[1.0], 0.0, 1).unwrap();
        let pot = LogisticPotential::new(data, 0.1, true, 0.0).unwrap();
        let v: f64 = pot.value(&Vector::zeros(2));
        assert!((v - 2f64.ln() / 0.1).abs() < 1e-12);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let pot = potential();
        let x = Vector::from_vec(vec![0.4, -0.2, 0.1]);
        let g: Vector<f64> = pot.gradient(&x);
        let h: Mat<f64> = pot.hessian(&x);
        let eps = 1e-6;
        for j in 0..3 {
            let mut e = Vector::zeros(3);
            e[j] = eps;
            let fd = (pot.value(&(&x + &e)) - Potential::<f64>::value(&pot, &(&x - &e))) / (2.0 * eps);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
            let fdg = (Potential::<f64>::gradient(&pot, &(&x + &e)) - Potential::<f64>::gradient(&pot, &(&x - &e))) / (2.0 * eps);
            for i in 0..3 {
                assert!((fdg[i] - h[(i, j)]).abs() <= 1e-5 * h[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
    }

    #[test]
    fn mismatched_rows_rejected() {
        assert!(LogisticData::new(Mat::zeros(3, 2), vec![0.0, 1.0]).is_err());
        assert!(LogisticData::new(Mat::zeros(2, 2), vec![0.0, 2.0]).is_err());
    }
}
