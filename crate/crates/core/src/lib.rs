//! Multicontinuum upscaling of density-driven and viscous-fingering
//! transport in heterogeneous porous media.

pub mod error;
pub mod experiment;
pub mod cells;
pub mod coarse;
pub mod continua;
pub mod fine;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod tpfa;

pub use error::{Error, Result};
