//! Estimation of random-parameter distributions in a diffusion-type
//! input/output model from aggregate time-series data.
//!
//! The forward model is a one-dimensional parabolic equation whose
//! two-component parameter q = (q1, q2) varies randomly across a population:
//! q1 scales diffusion through the medium and q2 the gain at the input
//! boundary. A hat-function Galerkin discretization plus a zero-order hold
//! turns each parameter value into a discrete-time LTI filter from the input
//! series (e.g. breath alcohol) to the surface output series (e.g.
//! transdermal alcohol). Given population-averaged output data, the unknown
//! parameter distribution is approximated by a discrete measure on a
//! rectangular grid, fit by simplex-constrained regularized least squares.
//!
//! The crate also carries the machinery to validate such estimates end to
//! end: CDF refinement by bicubic interpolation, a Metropolis independence
//! sampler, Peacock's two-dimensional two-sample Kolmogorov-Smirnov test,
//! leave-one-out cross-validation, and Bonferroni-corrected confidence bands
//! for predicted output.
//!
//! ```
//! use tacmix::measures::ParameterPoint;
//! use tacmix::pde_forward::{assemble, discretize, simulate, Episode};
//!
//! let q = ParameterPoint::new(0.6, 0.9).unwrap();
//! let system = discretize(&assemble(q, 16).unwrap(), 0.1).unwrap();
//! let input = Episode::new("demo", 0.1, vec![1.0; 40], None).unwrap();
//! let tac = simulate(&system, &input).unwrap();
//! assert_eq!(tac.len(), 40);
//! ```

pub mod cli;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod gof;
pub mod io;
pub mod measures;
pub mod pde_forward;
pub mod rng;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
