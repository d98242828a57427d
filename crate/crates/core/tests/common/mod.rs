#![allow(dead_code)]

use hkgf::{Cotangent, GaussianTarget, Mat, ScaledGaussian, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_mat(d: usize, r: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(d, d, |_, _| r.sample(StandardNormal))
}

pub fn gauss_vec(d: usize, r: &mut ChaCha8Rng) -> Vector<f64> {
    Vector::from_fn(d, |_, _| r.sample(StandardNormal))
}

/// Q diag(e^u) Qᵀ with u uniform on [−spread, spread].
pub fn spd(d: usize, spread: f64, r: &mut ChaCha8Rng) -> Mat<f64> {
    let q = gauss_mat(d, r).qr().q();
    let eig = Vector::from_fn(d, |_, _| r.random_range(-spread..=spread).exp());
    let m = &q * Mat::from_diagonal(&eig) * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn sym(d: usize, r: &mut ChaCha8Rng) -> Mat<f64> {
    let g = gauss_mat(d, r);
    (&g + g.transpose()) * 0.5
}

pub fn point(d: usize, r: &mut ChaCha8Rng) -> ScaledGaussian<f64> {
    let kappa = r.random_range(-1.0f64..1.0).exp();
    ScaledGaussian::new(spd(d, 1.0, r), gauss_vec(d, r), kappa).unwrap()
}

pub fn target(d: usize, r: &mut ChaCha8Rng) -> GaussianTarget<f64> {
    let vk = r.random_range(-1.0f64..1.0).exp();
    GaussianTarget::new(spd(d, 1.0, r), gauss_vec(d, r), vk).unwrap()
}

pub fn cotangent(d: usize, r: &mut ChaCha8Rng) -> Cotangent<f64> {
    Cotangent::new(sym(d, r), gauss_vec(d, r), r.sample(StandardNormal))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn mat_rel_err(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

pub fn vec_rel_err(a: &Vector<f64>, b: &Vector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Seeds for proptest-driven cases; each test draws its structured inputs from the seed.
pub fn seeds() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..=5)
}

pub fn prob_target(d: usize, r: &mut ChaCha8Rng) -> GaussianTarget<f64> {
    GaussianTarget::probability(spd(d, 1.0, r), gauss_vec(d, r)).unwrap()
}
