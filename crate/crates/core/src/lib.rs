//! Transverse-instability spectrum of the line soliton of the hyperbolic
//! nonlinear Schrödinger equation: dense spectra over the transverse
//! wavenumber ρ and the semiclassical growth-rate routes for large ρ.

pub mod cli;
pub mod eigensolver;
pub mod operators;
pub mod scan;
pub mod semiclassical;
pub mod specfun;
