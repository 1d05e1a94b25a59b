//! Symbolic dynamics on subshifts of finite type: entropy, pressure and
//! equilibrium states, rotation sets and multifractal spectra, realization of
//! prescribed (level, entropy) pairs, horseshoe approximation of measures, and
//! dimension and Lyapunov spectra for symbolic hyperbolic models and cocycles.

pub mod applications;
pub mod cli;
pub mod error;
pub mod format;
pub mod horseshoe;
pub mod measures;
pub mod model;
pub mod perron;
pub mod pressure;
pub mod realize;
pub mod sft;
pub(crate) mod solve;
pub mod spectrum;

pub use error::{Error, Result};
