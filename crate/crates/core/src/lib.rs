//! Dense statevector simulation and the quantum denoising diffusion pipeline.

pub mod analysis;
pub mod ansatz;
pub mod config;
pub mod duddpm;
pub mod error;
pub mod experiment;
pub mod qsim;
pub mod random;

pub use error::{Error, Result};
