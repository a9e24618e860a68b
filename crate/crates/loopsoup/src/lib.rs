//! Random-walk and Brownian loop soups on planar domains.
//!
//! The discrete side lives on finite subsets of ℤ²: loop measures with
//! killing, Poisson soup sampling with exponential-mark thinning couplings,
//! occupation fields, and the square-root isomorphism tying the occupation
//! field of the half-intensity soup to the Gaussian free field. The continuum
//! side samples massive Brownian loop soups with a duration cutoff and checks
//! conformal covariance. Geometry routines (clusters, fillings, carpets,
//! vacant-set crossings) and a statistics harness close the loop from theory
//! to Monte Carlo evidence; `tests/acceptance.rs` is the checklist.

pub mod brownian;
pub mod conformal;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod gff;
pub mod harness;
pub mod lattice;
pub mod loop_measure;
pub mod mass;
pub mod occupation;
pub mod rng;
pub mod soup;
pub mod stats;

pub use error::{Error, Result};
