//! Spectral view of the covariance flow through B = Γ^{-1/2} Σ Γ^{-1/2}.

use crate::error::{Error, Result};
use crate::gauss::GaussianTarget;
use crate::linalg::{self, Mat, Vector};
use crate::onsager::validate_weights;
use crate::scalar::{lit, Scalar};

/// Default gap below which two eigenvalues count as degenerate.
pub const EIG_GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct EigenRhs<T: Scalar> {
    /// Ḃ = −α(Γ⁻¹B + BΓ⁻¹ − 2Γ⁻¹) + β(B − B²).
    pub b_dot: Mat<T>,
    /// Ascending eigenvalues bᵢ of B.
    pub eigenvalues: Vector<T>,
    pub eigenvectors: Mat<T>,
    /// rᵢ = 2α⟨vᵢ, Γ⁻¹vᵢ⟩ + βbᵢ, so that ḃᵢ = −rᵢ(bᵢ − 1).
    pub rates: Vector<T>,
    /// ḃᵢ; only meaningful for simple eigenvalues.
    pub eigen_dot: Vector<T>,
    pub degenerate: bool,
}

/// Right-hand side for B, with B expressed in the Γ^{-1/2} symmetric whitening.
pub fn rhs_eigen<T: Scalar>(alpha: T, beta: T, b: &Mat<T>, target: &GaussianTarget<T>, gap_tol: T) -> Result<EigenRhs<T>> {
    validate_weights(alpha, beta)?;
    if b.nrows() != target.dim() || !b.is_square() {
        return Err(Error::dim("B and target dimensions differ"));
    }
    let gi = target.precision();
    let two = lit::<T>(2.0);
    let b_dot = -(gi * b + b * gi - gi * two) * alpha + (b - b * b) * beta;
    let (vals, vecs) = linalg::sym_eigen(b);
    let d = vals.len();
    let rates = Vector::from_fn(d, |i, _| {
        let v = vecs.column(i);
        two * alpha * v.dot(&(gi * v)) + beta * vals[i]
    });
    let eigen_dot = Vector::from_fn(d, |i, _| -rates[i] * (vals[i] - T::one()));
    let degenerate = vals.as_slice().windows(2).any(|w| w[1] - w[0] < gap_tol);
    Ok(EigenRhs { b_dot: linalg::symmetrize(&b_dot), eigenvalues: vals, eigenvectors: vecs, rates, eigen_dot, degenerate })
}

/// Envelope (lo, hi) for an eigenvalue of B started at `b0`, with every rate at least `nu`:
/// bᵢ stays on its side of 1, approaching it at least as fast as the scalar
/// comparison solutions 1 + (b0 − 1)e^{−νt} from above and 1/(1 + (1/b0 − 1)e^{−νt}) from below.
pub fn eigen_envelope(b0: f64, nu: f64, t: f64) -> (f64, f64) {
    let e = (-nu * t).exp();
    let upper = 1.0 + (b0 - 1.0) * e;
    let lower = 1.0 / (1.0 + (1.0 / b0 - 1.0) * e);
    (lower.min(1.0), upper.max(1.0))
}

/// Reorders `vecs`/`vals` so that column i best overlaps column i of `prev`.
pub fn match_by_overlap<T: Scalar>(prev: &Mat<T>, vals: &Vector<T>, vecs: &Mat<T>) -> (Vector<T>, Mat<T>) {
    let d = vals.len();
    let overlap = prev.transpose() * vecs;
    let mut used = vec![false; d];
    let mut order = vec![0usize; d];
    // Greedy assignment in order of decreasing best overlap.
    let mut rows: Vec<usize> = (0..d).collect();
    let best = |i: usize| (0..d).fold(T::zero(), |m, j| m.max(overlap[(i, j)].abs()));
    rows.sort_by(|&a, &b| best(b).partial_cmp(&best(a)).unwrap_or(std::cmp::Ordering::Equal));
    for i in rows {
        let mut pick = None;
        let mut top = -T::one();
        for j in 0..d {
            if !used[j] && overlap[(i, j)].abs() > top {
                top = overlap[(i, j)].abs();
                pick = Some(j);
            }
        }
        let j = pick.expect("unused column remains");
        used[j] = true;
        order[i] = j;
    }
    let new_vals = Vector::from_fn(d, |i, _| vals[order[i]]);
    let mut new_vecs = Mat::zeros(d, d);
    for i in 0..d {
        let mut col = vecs.column(order[i]).into_owned();
        if prev.column(i).dot(&col) < T::zero() {
            col = -col;
        }
        new_vecs.set_column(i, &col);
    }
    (new_vals, new_vecs)
}
