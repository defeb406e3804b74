//! Multitime equilibration of isolated quantum processes.
//!
//! The crate builds process tensors and their dephased equilibrium
//! counterparts for finite system–environment models, evaluates multitime
//! instrument expectation values, computes the variance / Chebyshev / Markov
//! equilibration bounds, measures operational non-Markovianity across a causal
//! break, and runs the random-matrix-bath experiment.
//!
//! Module map:
//!
//! - [`qmath`]: operators with subsystem structure, spectral decomposition,
//!   partial trace.
//! - [`channels`]: CP maps, instruments, dephasing, POVM and channel norms.
//! - [`process`]: multitime expectation values, Choi process tensors,
//!   observable decomposition.
//! - [`bounds`]: effective dimension and every equilibration bound.
//! - [`nonmarkov`]: conditional outcome tables and the non-Markovianity measure.
//! - [`experiments`]: random-matrix bath model and the parameter sweep.
//! - [`io`]: CSV / JSON / tensor-dump formats.

pub mod bounds;
pub mod channels;
mod error;
pub mod experiments;
pub mod io;
pub mod nonmarkov;
pub mod process;
pub mod qmath;
pub mod rng;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
