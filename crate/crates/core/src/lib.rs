//! Super-resolution multi-reference alignment.
//!
//! Observations are circularly shifted, down-sampled and noisy copies of a
//! length-`M` signal. This crate provides the observation model, the
//! shift-invariant moments and their noise bias, the orbit of signals that
//! share a likelihood, an identifiability test for the moment map, and an
//! EM estimator under a Gaussian prior.
//!
//! All numerics are generic over [`Real`]; the aliases below fix `f64`.

pub mod dft;
pub mod em;
pub mod error;
pub mod invariants;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod orbit;
pub mod prior;
pub mod rng;
pub mod scalar;
pub mod signal;

pub use error::{MraError, Result};
pub use invariants::{
    autocorrelation, debias, empirical_invariants, fourier_invariants, invariant_distance,
    mixed_invariants, Autocorrelation, BiasTerms, InvariantTriple,
};
pub use linalg::DenseMatrix;
pub use prior::{sample_prior, PriorSpec};
pub use scalar::Real;
pub use signal::{
    circular_shift, generate_batch, generate_batch_with_shifts, sample_bandlimited_signal,
    sample_observation, template, HighResSignal, ModelParams, ObservationBatch,
};

pub type Signal = HighResSignal<f64>;
pub type Params = ModelParams<f64>;
pub type Batch = ObservationBatch<f64>;
pub type Prior = PriorSpec<f64>;
pub type Triple = InvariantTriple<f64>;
pub type Matrix = DenseMatrix<f64>;
