//! Numerical stochastic homogenization of one-dimensional chains of atoms
//! with Lennard-Jones type bond potentials.
//!
//! The crate evaluates discrete chain energies on random media, solves the
//! finite-window cell problems whose large-window limit is the homogenized
//! energy density `J_hom`, tabulates `J_hom` and checks its structure
//! (convexity, monotone decrease, fracture plateau).

pub mod cell;
pub mod chain;
pub mod config;
pub mod engine;
pub mod error;
pub mod extended;
pub mod harness;
pub mod homogenized;
pub mod medium;
pub mod potential;
pub mod stats;

pub use error::{Error, Result};
pub use extended::ExtReal;
