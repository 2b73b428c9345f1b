//! Spectral basis construction for tabular MDPs.
//!
//! The crate builds proto-value functions (eigenvectors of graph diffusion
//! operators) and their reward-weighted variants over gridworld state graphs,
//! then learns policies with representational policy iteration (LSPI driven by
//! LSTDQ). Exact tabular solvers in [`mdp`] serve as the reference every
//! learned policy is scored against.
//!
//! All numerical code is generic over a [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! experiment tolerances assume.

pub mod error;
pub mod export;
pub mod grid;
pub mod learner;
pub mod mdp;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TabularMdp = mdp::TabularMdp<f64>;
pub type Policy = mdp::Policy<f64>;
pub type ValueFunction = mdp::ValueFunction<f64>;
pub type QFunction = mdp::QFunction<f64>;
pub type StateGraph = spectral::StateGraph<f64>;
pub type SimilarityMatrix = spectral::SimilarityMatrix<f64>;
pub type BasisSet = spectral::BasisSet<f64>;
pub type FeatureMap = spectral::FeatureMap<f64>;
pub type Sample = learner::Sample<f64>;
pub type SampleSet = learner::SampleSet<f64>;
pub type WeightVector = learner::WeightVector<f64>;
pub type LearnerConfig = learner::LearnerConfig<f64>;
pub type PotentialFunction = grid::PotentialFunction<f64>;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
