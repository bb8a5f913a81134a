//! Sampling-free statistical finite elements.
//!
//! A lognormal Young's modulus field is expanded with Karhunen–Loève modes,
//! the displacement response is projected onto a Hermite polynomial-chaos
//! basis with Smolyak quadrature, and sensor data are assimilated by a linear
//! Gauss–Markov–Kálmán update of the chaos coefficients. Model-error
//! hyperparameters are found by maximizing a quadrature approximation of the
//! marginal likelihood.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

pub mod datagen;
pub mod error;
pub mod fem;
pub mod hyperopt;
pub mod linalg;
pub mod pce;
pub mod quadrature;
pub mod randomfield;
pub mod rng;
pub mod scalar;
pub mod statfem;

pub use error::{Error, Result, StartReport};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Mesh = fem::Mesh<f64>;
pub type SparseGrid = quadrature::SparseGrid<f64>;
pub type UnivariateRule = quadrature::UnivariateRule<f64>;
pub type Kernel = randomfield::Kernel<f64>;
pub type KlExpansion = randomfield::KlExpansion<f64>;
pub type LognormalLink = randomfield::LognormalLink<f64>;
pub type PcBasis = pce::PcBasis<f64>;
pub type PcField = pce::PcField<f64>;
pub type MismatchBasis = statfem::MismatchBasis<f64>;
pub type ExtendedPc = statfem::ExtendedPc<f64>;
pub type PosteriorResult = statfem::PosteriorResult<f64>;
pub type NlmlContext = hyperopt::NlmlContext<f64>;
pub type ObservationSet = datagen::ObservationSet<f64>;
