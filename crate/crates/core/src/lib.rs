//! Semi-classical Monte-Carlo simulation of Sisyphus cooling in a 3D lin⊥lin
//! near-resonant optical lattice.
//!
//! The crate is organised bottom-up:
//!
//! - [`angular`]: Clebsch-Gordan coefficients and dipole components.
//! - [`field`]: the four-beam polarization field, light-shift and pumping
//!   operators, lattice constants and the diabatic modulation depth.
//! - [`eigen`]: a small dense Hermitian eigensolver.
//! - [`adiabatic`]: adiabatic potentials and states, pumping rates,
//!   radiation pressure and momentum diffusion.
//! - [`wells`]: potential-well characterisation and plane scans.
//! - [`langevin`]: the quantum-jump Langevin integrator and ensemble runs.
//! - [`thermometry`]: ballistic expansion, profile fits and temperature
//!   estimators.
//! - [`snapshot`], [`config`], [`report`]: file formats and orchestration used
//!   by the `sisyphus` binary.

pub mod adiabatic;
pub mod angular;
pub mod config;
pub mod eigen;
pub mod error;
pub mod field;
pub mod langevin;
pub mod report;
pub mod snapshot;
pub mod thermometry;
pub mod units;
pub mod wells;

pub use error::{Error, Result};
pub use units::Transition;
