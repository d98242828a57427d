//! Gaussian reductions of the Hellinger–Kantorovich gradient flow of the
//! relative entropy: reduced Onsager operators, flow integration, decay
//! estimates, metric geometry and a sampled variational descent.
//!
//! Everything numeric is generic over [`Scalar`] (implemented for `f32` and
//! `f64`); the `*F64` / `*F32` aliases below pin the common choices.

pub mod decay;
pub mod descent;
pub mod error;
pub mod flow;
pub mod gauss;
pub mod geometry;
pub mod linalg;
pub mod moments;
pub mod onsager;
pub mod scalar;

pub use error::{Error, Result};
pub use gauss::{EnergySplit, GaussianTarget, ScaledGaussian, SimpleCoords};
pub use linalg::{Mat, Vector};
pub use onsager::{Cotangent, Tangent};
pub use scalar::{lit, Scalar};

pub type ScaledGaussianF64 = ScaledGaussian<f64>;
pub type ScaledGaussianF32 = ScaledGaussian<f32>;
pub type GaussianTargetF64 = GaussianTarget<f64>;
pub type GaussianTargetF32 = GaussianTarget<f32>;
pub type SimpleCoordsF64 = SimpleCoords<f64>;
pub type SimpleCoordsF32 = SimpleCoords<f32>;
pub type CotangentF64 = Cotangent<f64>;
pub type TrajectoryF64 = flow::Trajectory<f64>;
