//! Replica-method performance prediction for MAP estimation over linear
//! AWGN systems `y = Ax + z`, with a Monte Carlo simulator of the actual
//! vector system to check the predictions against.
//!
//! The analytic layers are generic over the scalar type ([`Real`], i.e. `f32`
//! or `f64`); the aliases below fix `f64`, which is what the solver defaults,
//! tolerances and the simulator are tuned for.

pub mod denoisers;
pub mod ensembles;
mod error;
pub mod montecarlo;
pub mod observables;
pub mod quadrature;
pub mod replica;
mod scalar;
pub mod solver;
pub mod sources;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GaussHermiteRule = quadrature::GaussHermiteRule<f64>;
pub type LegendreRule = quadrature::LegendreRule<f64>;
pub type Quadrature = quadrature::Quadrature<f64>;
pub type SpectralEnsemble = ensembles::SpectralEnsemble<f64>;
pub type SourcePrior = sources::SourcePrior<f64>;
pub type Utility = denoisers::Utility<f64>;
pub type Support = denoisers::Support<f64>;
pub type DenoiserSpec = denoisers::DenoiserSpec<f64>;
pub type ModelConfig = replica::ModelConfig<f64>;
pub type ReplicaState = replica::ReplicaState<f64>;
pub type EffectiveChannel = replica::EffectiveChannel<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type FixedPointSolution = solver::FixedPointSolution<f64>;
pub type Distortion = observables::Distortion<f64>;
