//! Markov commutator semigroups, the hypergroup property and the discrete
//! wave equation for birth-death chains.

pub mod commutator;
pub mod error;
pub mod intertwine;
pub mod kernel;
pub mod lp;
pub mod matrix;
pub mod metropolis;
pub mod pipeline;
pub mod product;
pub mod spectral;
pub mod symmetry;
pub mod wave;

pub use error::{Error, Result};
pub use kernel::{MarkovKernel, ProbabilityVector, Tolerances};
pub use matrix::Matrix;
pub use spectral::SpectralDecomposition;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/metropolis.md")]
    mod metropolis {}
    #[doc = include_str!("../../../book/src/wave.md")]
    mod wave {}
    #[doc = include_str!("../../../book/src/hypergroup.md")]
    mod hypergroup {}
    #[doc = include_str!("../../../book/src/symmetry.md")]
    mod symmetry {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
