//! Random slab polytopes for approximating the n-dimensional Euclidean ball.
//!
//! The intersection of `N/2` independent random slabs of a calibrated
//! half-width is, with high probability, a polytope with `N` facets whose
//! symmetric volume difference from the unit ball decays like
//! `N^(-2/(n-1))`. This crate provides:
//!
//! - [`geometry`]: ball volumes, spherical cap integrals, the slab exit
//!   probability `alpha` and its asymptotics, all usable in the log domain;
//! - [`expectation`]: exact quadrature of the expected symmetric volume
//!   difference, the limit constants `I`, `II` and the optimal rate `ln 2`;
//! - [`mc`]: seeded, reproducible realizations and unbiased Monte Carlo
//!   estimators that serve as the empirical oracle for the analytic engine;
//! - [`bounds`]: closed-form theorem bounds and regime sweeps.
//!
//! Everything is a pure function of its inputs (plus explicit seeds), safe
//! for concurrent use.

pub mod bounds;
pub mod error;
pub mod expectation;
pub mod geometry;
pub mod mc;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
