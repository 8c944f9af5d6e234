//! Numerical laboratory for random diffusion polynomials on model closed
//! manifolds (flat tori T^d, d ≤ 3, and the unit 2-sphere).
//!
//! The crate builds the Laplace-Beltrami eigenbasis up to a frequency cutoff,
//! evaluates reproducing kernels and Christoffel functions, constructs
//! maximal separated point sets with Marcinkiewicz-Zygmund weights, samples
//! Gaussian random polynomials on deterministic per-trial substreams, and
//! estimates norm-ratio statistics (average and worst-case Nikolskii
//! factors, norm moments, small-ball diagnostics) together with the
//! scaling-law fits used by the experiment suites.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod manifold;
pub mod norms;
pub mod numerics;
pub mod pointsets;
pub mod randpoly;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
pub use manifold::{ManifoldKind, ManifoldModel, Point};
pub use norms::{Exponent, NormEngine, NormMethod, NormOptions, NormReport};
pub use randpoly::{sample_coefficients, CoefficientVector};
pub use spectrum::{BasisLabel, Eigenpair, SpectralSpace};
