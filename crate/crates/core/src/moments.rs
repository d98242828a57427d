//! Low-order moments of the standard normal distribution.

use crate::linalg::{Mat, Vector};
use crate::scalar::{lit, Scalar};

/// E[(a·y)(b·y)] = a·b.
pub fn moment2<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> T {
    a.dot(b)
}

/// E[y·Ay] = tr A.
pub fn trace_moment<T: Scalar>(a: &Mat<T>) -> T {
    a.trace()
}

/// E[(y·Ay)(y·By)] = 2 A:B + tr A tr B, for symmetric A and B.
pub fn quartic_moment<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> T {
    lit::<T>(2.0) * a.dot(b) + a.trace() * b.trace()
}

/// y ↦ y·Py + q·y + r with P symmetric, integrated against N(0, I).
#[derive(Clone, Debug)]
pub struct QuadraticPoly<T: Scalar> {
    pub p: Mat<T>,
    pub q: Vector<T>,
    pub r: T,
}

impl<T: Scalar> QuadraticPoly<T> {
    pub fn mean(&self) -> T {
        trace_moment(&self.p) + self.r
    }

    /// Odd moments vanish, leaving the quartic, cross and constant terms.
    pub fn mean_square(&self) -> T {
        let two = lit::<T>(2.0);
        quartic_moment(&self.p, &self.p)
            + moment2(&self.q, &self.q)
            + two * self.r * trace_moment(&self.p)
            + self.r * self.r
    }

    pub fn eval(&self, y: &Vector<T>) -> T {
        y.dot(&(&self.p * y)) + self.q.dot(y) + self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quartic_matches_monte_carlo() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -0.5]);
        let b = Mat::from_row_slice(2, 2, &[0.2, -0.7, -0.7, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            acc += y.dot(&(&a * &y)) * y.dot(&(&b * &y));
        }
        let mc: f64 = acc / n as f64;
        assert!((mc - quartic_moment(&a, &b)).abs() < 0.05, "{mc} vs {}", quartic_moment(&a, &b));
    }

    #[test]
    fn poly_mean_square_matches_expansion() {
        let poly = QuadraticPoly {
            p: Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
            q: Vector::from_vec(vec![1.0, -2.0]),
            r: 0.25,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y: Vector<f64> = Vector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            acc += poly.eval(&y).powi(2);
        }
        let mc = acc / n as f64;
        assert!((mc - poly.mean_square()).abs() / poly.mean_square() < 0.01);
    }
}
