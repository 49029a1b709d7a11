//! Spectral laboratory for the dimensionless dipolar Gross-Pitaevskii equation
//!
//! ```text
//! i psi_t = -1/2 Lap psi + a^2/2 |x|^2 psi + lambda1 |psi|^2 psi + lambda2 (K * |psi|^2) psi
//! ```
//!
//! on a periodic box, with the dipole axis along `x3`. The crate evaluates the
//! energy functionals spectrally, computes free and trapped ground states,
//! integrates the time-dependent equation and runs scripted studies on top.

pub mod dynamics;
pub mod config;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod grid;
pub mod ground_state;
pub mod io;
pub mod par;
pub mod rescale;

pub use error::{Error, Result};
pub use functionals::{breakdown, EnergyBreakdown, PhysParams, Regime, RegimeTag};
pub use grid::{GridSpec, Spectrum, WaveField, C64};
pub use par::Exec;
