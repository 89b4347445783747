//! Simulation and inversion of plenoptic images of two superposed layers.

pub mod cli;
pub mod depthnet;
pub mod error;
pub mod experiment;
pub mod io;
pub mod lightfield;
pub mod operators;
pub mod optics;
pub mod recon;
pub mod textures;

pub use error::{Error, Result};
