//! Stochastic Galerkin / discontinuous Galerkin solver for the semiconductor
//! Boltzmann-Poisson system with a random lattice temperature.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod collision;
pub mod config;
pub mod error;
pub mod gpc;
pub mod grid;
pub mod kernels;
pub mod output;
pub mod poisson;
pub mod polylog;
pub mod quadrature;
pub mod scaling;
pub mod simulate;
pub mod transport;

pub use error::{Error, Result};
