#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical tools for variational formulas of mixed spin-glass free energies.
//!
//! The crate evaluates the Parisi functional, brackets the limiting free
//! energy between a Parisi-type lower bound and a Hopf-Lax upper bound,
//! provides the finite-dimensional Fenchel-Moreau constructions behind the
//! bounds, and estimates finite-volume free energies by exact enumeration.

pub mod duality;
pub mod fenchel;
pub mod hopf;
pub mod lp;
pub mod measures;
pub mod models;
pub mod montecarlo;
pub mod optimize;
pub mod parisi;
pub mod quadrature;
