use hkgf::{linalg, Cotangent, GaussianTarget, Mat, ScaledGaussian, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_mat(d: usize, r: &mut Rng8) -> Mat<f64> {
    Mat::from_fn(d, d, |_, _| r.sample(StandardNormal))
}

pub fn gauss_vec(d: usize, r: &mut Rng8) -> Vector<f64> {
    Vector::from_fn(d, |_, _| r.sample(StandardNormal))
}

pub fn orthogonal(d: usize, r: &mut Rng8) -> Mat<f64> {
    gauss_mat(d, r).qr().q()
}

/// Q diag(eig) Qᵀ, symmetrized.
pub fn with_spectrum(q: &Mat<f64>, eig: &Vector<f64>) -> Mat<f64> {
    linalg::symmetrize(&(q * Mat::from_diagonal(eig) * q.transpose()))
}

/// Random SPD matrix with log-eigenvalues uniform on [−spread, spread].
pub fn spd(d: usize, spread: f64, r: &mut Rng8) -> Mat<f64> {
    let q = orthogonal(d, r);
    let eig = Vector::from_fn(d, |_, _| r.random_range(-spread..=spread).exp());
    with_spectrum(&q, &eig)
}

pub fn sym(d: usize, r: &mut Rng8) -> Mat<f64> {
    linalg::symmetrize(&gauss_mat(d, r))
}

pub fn point(d: usize, r: &mut Rng8) -> ScaledGaussian<f64> {
    let kappa = r.random_range(-1.0f64..1.0).exp();
    ScaledGaussian::new(spd(d, 1.0, r), gauss_vec(d, r), kappa).unwrap()
}

pub fn target(d: usize, r: &mut Rng8) -> GaussianTarget<f64> {
    let vk = r.random_range(-1.0f64..1.0).exp();
    GaussianTarget::new(spd(d, 1.0, r), gauss_vec(d, r), vk).unwrap()
}

pub fn prob_target(d: usize, spread: f64, r: &mut Rng8) -> GaussianTarget<f64> {
    GaussianTarget::probability(spd(d, spread, r), gauss_vec(d, r)).unwrap()
}

pub fn cotangent(d: usize, r: &mut Rng8) -> Cotangent<f64> {
    Cotangent::new(sym(d, r), gauss_vec(d, r), r.sample(StandardNormal))
}

/// Shape-only cotangent of unit norm.
pub fn unit_shape_cotangent(d: usize, r: &mut Rng8) -> Cotangent<f64> {
    let e = Cotangent::new(sym(d, r), gauss_vec(d, r), 0.0);
    let n = e.norm_squared().sqrt();
    e.scaled(1.0 / n)
}

/// Γ^{1/2} B Γ^{1/2}.
pub fn sandwich(gamma: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let root = linalg::sqrt_spd(gamma);
    linalg::symmetrize(&(&root * b * &root))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn mat_rel_err(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}
