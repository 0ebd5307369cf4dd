//! Discrete breathers in chains of weakly coupled anharmonic oscillators.

pub mod breather;
pub mod config;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod lattice;
pub mod linear;
pub mod normal_form;
pub mod numerics;
pub mod oscillator;
pub mod potential;

pub use error::{Error, Result};
