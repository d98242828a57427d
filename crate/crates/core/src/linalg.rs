//! Small dense helpers for symmetric and SPD matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

pub type Mat<T> = DMatrix<T>;
pub type Vector<T> = DVector<T>;

/// Relative Frobenius tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn symmetrize<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn symmetrize_mut<T: Scalar>(m: &mut Mat<T>) {
    let n = m.nrows();
    let half = lit::<T>(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// ‖M − Mᵀ‖_F / max(‖M‖_F, 1).
pub fn asymmetry<T: Scalar>(m: &Mat<T>) -> T {
    let diff = (m - m.transpose()).norm();
    diff / m.norm().max(T::one())
}

/// Validates squareness and near-symmetry, returning the symmetrized copy.
pub fn ingest_symmetric<T: Scalar>(m: Mat<T>, what: &'static str) -> Result<Mat<T>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain(format!("{what} has non-finite entries")));
    }
    let a = asymmetry(&m);
    if a > lit(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric {
            what,
            asymmetry: a.to_f64_lossy(),
        });
    }
    Ok(symmetrize(&m))
}

pub fn min_eigenvalue<T: Scalar>(m: &Mat<T>) -> T {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| lit(f64::MAX)), |a, b| a.min(b))
}

pub fn max_eigenvalue<T: Scalar>(m: &Mat<T>) -> T {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::min_value().unwrap_or_else(|| lit(f64::MIN)), |a, b| a.max(b))
}

/// Cholesky factorization; failure defines "not SPD".
pub fn cholesky<T: Scalar>(m: &Mat<T>, what: &'static str) -> Result<Cholesky<T, Dyn>> {
    match Cholesky::new(m.clone()) {
        Some(c) if c.l_dirty().diagonal().iter().all(|d| *d > T::zero() && d.is_finite()) => Ok(c),
        _ => Err(Error::NotSpd {
            what,
            eigenvalue: min_eigenvalue(m).to_f64_lossy(),
        }),
    }
}

pub fn log_det_chol<T: Scalar>(c: &Cholesky<T, Dyn>) -> T {
    let two = lit::<T>(2.0);
    c.l_dirty().diagonal().iter().fold(T::zero(), |acc, d| acc + two * d.ln())
}

pub fn spd_inverse<T: Scalar>(m: &Mat<T>, what: &'static str) -> Result<Mat<T>> {
    let c = cholesky(m, what)?;
    Ok(symmetrize(&c.inverse()))
}

/// Ascending eigenvalues with matching eigenvector columns.
pub fn sym_eigen<T: Scalar>(m: &Mat<T>) -> (Vector<T>, Mat<T>) {
    let eig = symmetrize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = Vector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Mat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// V f(Λ) Vᵀ for symmetric input.
pub fn sym_apply<T: Scalar>(m: &Mat<T>, f: impl Fn(T) -> T) -> Mat<T> {
    let (vals, vecs) = sym_eigen(m);
    let fl = Mat::from_diagonal(&vals.map(f));
    symmetrize(&(&vecs * fl * vecs.transpose()))
}

pub fn sqrt_spd<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    sym_apply(m, |x| x.max(T::zero()).sqrt())
}

pub fn inv_sqrt_spd<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    sym_apply(m, |x| T::one() / x.sqrt())
}

/// exp(scale · M) for symmetric M.
pub fn expm_sym<T: Scalar>(m: &Mat<T>, scale: T) -> Mat<T> {
    sym_apply(m, |x| (scale * x).exp())
}

pub fn frob_inner<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> T {
    a.dot(b)
}

pub fn trace<T: Scalar>(m: &Mat<T>) -> T {
    m.trace()
}

pub fn spectral_norm_sym<T: Scalar>(m: &Mat<T>) -> T {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |a, b| a.max(b.abs()))
}

pub fn identity<T: Scalar>(d: usize) -> Mat<T> {
    Mat::identity(d, d)
}

pub fn check_vec_len<T: Scalar>(v: &Vector<T>, d: usize, what: &str) -> Result<()> {
    if v.len() != d {
        return Err(Error::dim(format!("{what} has length {}, expected {d}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain(format!("{what} has non-finite entries")));
    }
    Ok(())
}

pub(crate) fn to_f64_vec<T: Scalar>(v: &Vector<T>) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Row-major nested arrays for JSON.
pub(crate) mod serde_nested {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn mat_to_rows<T: Scalar>(m: &Mat<T>) -> Vec<Vec<T>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    pub fn rows_to_mat<T: Scalar>(rows: &[Vec<T>]) -> std::result::Result<Mat<T>, String> {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != c) {
            return Err("ragged matrix rows".into());
        }
        Ok(Mat::from_fn(n, c, |i, j| rows[i][j]))
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<T: Scalar, S: Serializer>(m: &Mat<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
            mat_to_rows(m).serialize(s)
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat<T>, D::Error> {
            let rows = Vec::<Vec<T>>::deserialize(d)?;
            rows_to_mat(&rows).map_err(serde::de::Error::custom)
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<T: Scalar, S: Serializer>(v: &Vector<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
            v.as_slice().serialize(s)
        }

        pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector<T>, D::Error> {
            let v = Vec::<T>::deserialize(d)?;
            Ok(Vector::from_vec(v))
        }
    }
}
