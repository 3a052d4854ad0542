//! Spectral Monte-Carlo simulation of passive tracers in Gaussian–Markov
//! velocity fields on the torus `T^d = [0, 2π)^d`.
//!
//! * [`spectrum`]: Fourier-mode models `(k, γ(k), E(k))` and checks on them.
//! * [`field`]: real fields as conjugate-symmetric coefficient vectors, the
//!   exact Ornstein–Uhlenbeck sampler and the nonlinear mode flows.
//! * [`tracer`]: tracer advection and the field seen from the tracer.
//! * [`ergodic`]: time averages, occupation, moments and coupling probes.
//! * [`chain`]: an exactly solvable Markov chain with the e-property that
//!   is not tight.

pub mod chain;
pub mod ergodic;
mod error;
pub mod field;
mod linalg;
pub mod rng;
pub mod spectrum;
pub mod tracer;

pub use error::{Error, Result};
pub use field::{FourierField, OUState};
pub use spectrum::{build_power_law_spectrum, PowerLawParams, Projection, SpectrumModel, Wavevector};
