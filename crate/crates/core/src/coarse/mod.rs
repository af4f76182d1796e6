//! Coarse multicontinuum models: mixed flow, flattened Galerkin flow and the
//! continuum concentration update.

pub mod galerkin;
pub mod mixed;
pub mod run;
pub mod transport;
