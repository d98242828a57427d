use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::onsager::Tangent;
use crate::scalar::{lit, Scalar};

/// State that can be moved along a derivative: `y + h · d`.
pub trait OdeState<T: Scalar>: Clone {
    type Deriv;
    fn advance(&self, h: T, d: &Self::Deriv) -> Self;
}

pub fn euler_step<T, S, F>(y: &S, h: T, f: &mut F) -> Result<S>
where
    T: Scalar,
    S: OdeState<T>,
    F: FnMut(&S) -> Result<S::Deriv>,
{
    let k = f(y)?;
    Ok(y.advance(h, &k))
}

pub fn rk4_step<T, S, F>(y: &S, h: T, f: &mut F) -> Result<S>
where
    T: Scalar,
    S: OdeState<T>,
    F: FnMut(&S) -> Result<S::Deriv>,
{
    let half = h * lit::<T>(0.5);
    let k1 = f(y)?;
    let k2 = f(&y.advance(half, &k1))?;
    let k3 = f(&y.advance(half, &k2))?;
    let k4 = f(&y.advance(h, &k3))?;
    let sixth = h / lit::<T>(6.0);
    let third = h / lit::<T>(3.0);
    Ok(y.advance(sixth, &k1).advance(third, &k2).advance(third, &k3).advance(sixth, &k4))
}

/// Maximum number of recursive step halvings before giving up.
pub const MAX_HALVINGS: u32 = 40;

/// One step of size `h`, splitting it in two whenever a stage fails or the
/// result is rejected. Returns the new state and the number of halvings used.
pub fn guarded_step<T, S, F, A>(
    y: &S,
    h: T,
    rk4: bool,
    f: &mut F,
    accept: &A,
    t: T,
) -> Result<(S, usize)>
where
    T: Scalar,
    S: OdeState<T>,
    F: FnMut(&S) -> Result<S::Deriv>,
    A: Fn(&S) -> bool,
{
    fn go<T, S, F, A>(y: &S, h: T, rk4: bool, f: &mut F, accept: &A, t: T, depth: u32, count: &mut usize) -> Result<S>
    where
        T: Scalar,
        S: OdeState<T>,
        F: FnMut(&S) -> Result<S::Deriv>,
        A: Fn(&S) -> bool,
    {
        let attempt = if rk4 { rk4_step(y, h, f) } else { euler_step(y, h, f) };
        let reason = match attempt {
            Ok(next) if accept(&next) => return Ok(next),
            Ok(_) => "state left the admissible set".to_string(),
            Err(e) if e.is_numerical() || matches!(e, Error::Domain(_)) => e.to_string(),
            Err(e) => return Err(e),
        };
        if depth >= MAX_HALVINGS {
            return Err(Error::Integration {
                time: t.to_f64_lossy(),
                reason: format!("step halved {MAX_HALVINGS} times without success: {reason}"),
            });
        }
        *count += 1;
        let half = h * lit::<T>(0.5);
        let mid = go(y, half, rk4, f, accept, t, depth + 1, count)?;
        go(&mid, half, rk4, f, accept, t + half, depth + 1, count)
    }
    let mut count = 0;
    let next = go(y, h, rk4, f, accept, t, 0, &mut count)?;
    Ok((next, count))
}

/// Unvalidated (Σ, m, κ) used between RK stages.
#[derive(Clone, Debug)]
pub struct RawPoint<T: Scalar> {
    pub sigma: Mat<T>,
    pub m: Vector<T>,
    pub kappa: T,
}

impl<T: Scalar> OdeState<T> for RawPoint<T> {
    type Deriv = Tangent<T>;
    fn advance(&self, h: T, d: &Tangent<T>) -> Self {
        RawPoint {
            sigma: &self.sigma + &d.d_sigma * h,
            m: &self.m + &d.d_m * h,
            kappa: self.kappa + d.d_kappa * h,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalar1(f64);
    impl OdeState<f64> for Scalar1 {
        type Deriv = f64;
        fn advance(&self, h: f64, d: &f64) -> Self {
            Scalar1(self.0 + h * d)
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let mut y = Scalar1(1.0);
            let n = (1.0 / h).round() as usize;
            for _ in 0..n {
                y = rk4_step(&y, h, &mut |s: &Scalar1| Ok(-s.0)).unwrap();
            }
            (y.0 - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio.log2() - 4.0).abs() < 0.2, "order {}", ratio.log2());
    }

    #[test]
    fn guarded_step_halves_until_accepted() {
        let y = Scalar1(1.0);
        let (next, halvings) =
            guarded_step(&y, 1.5, false, &mut |s: &Scalar1| Ok(-s.0), &|s: &Scalar1| s.0 > 0.0, 0.0).unwrap();
        assert!(next.0 > 0.0);
        assert!(halvings > 0);
    }
}
