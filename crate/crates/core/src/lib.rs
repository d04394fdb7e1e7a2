//! Simulation and analysis toolkit for polarization-entangled photon pairs from
//! the biexciton–exciton cascade of a quantum dot under two-photon resonant
//! excitation, including the laser-induced AC-Stark splitting of the exciton.
//!
//! The crate is organized by stage of the pipeline:
//!
//! - [`units`]: constants and energy/time conversions.
//! - [`state`]: two-photon density matrices, concurrence, Bell fidelity,
//!   physicality projection and multiphoton correction.
//! - [`cascade`]: the forward model (emission times, transient splitting,
//!   ensemble states, closed-form concurrence, sweeps, notch filtering).
//! - [`tomography`]: 36-setting coincidence simulation, linear inversion and
//!   maximum-likelihood reconstruction.
//! - [`spectra`]: polarization-resolved spectra and their centroid and
//!   sideband metrics.
//! - [`fitting`]: damped Gauss–Newton least squares plus the sinusoid and
//!   closed-form concurrence fits.
//! - [`runner`]: configuration, reproducible experiment commands and manifests
//!   behind the `cascata` binary.

pub mod cascade;
pub mod error;
pub mod fitting;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod spectra;
pub mod state;
pub mod tomography;
pub mod units;

pub use error::{Error, Result};
pub use state::{G2Pair, TwoPhotonState};
