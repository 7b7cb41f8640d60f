//! Monte-Carlo simulation of ghost diffraction and ghost imaging with
//! pseudo-thermal speckle, with exact reference predictions.

pub mod correlator;
pub mod error;
pub mod grid;
pub mod objects;
pub mod optics;
pub mod oracles;
pub mod pgm;
pub mod rng;
pub mod scenarios;
pub mod source;

pub use error::{Error, Result};
