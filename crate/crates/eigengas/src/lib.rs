//! Noisy adiabatic computation of a CNOT gate, simulated through a
//! stochastic eigenvalue-gas model of the instantaneous spectrum.
//!
//! The sweep Hamiltonian `h0 + lambda * z * hb + dh(lambda)` interpolates
//! from a strong bias (`lambda = 1`) down to the problem Hamiltonian
//! (`lambda = 0`) while a random symmetric perturbation `dh` fluctuates
//! along the way. Instead of evolving a state vector, the crate integrates
//! the motion of the eigenvalues themselves: they behave like a
//! one-dimensional gas of particles whose velocities and pairwise couplings
//! close under a set of coupled equations, with the noise entering through
//! its derivative in the instantaneous eigenbasis.
//!
//! Modules:
//! - [`hamiltonian`]: the CNOT history Hamiltonian on an eight-dot register,
//!   input penalties and bias presets;
//! - [`noise`]: GOE draws, the exact mean-reverting update, amplitude
//!   schedules and noise modes;
//! - [`gas`]: the gas equations of motion and the predictor-corrector sweep
//!   integrator;
//! - [`oracle`]: direct-diagonalization ground truth, fidelity and readout;
//! - [`lzs`]: crossing detection and the two-level transition cascade that
//!   turns a spectrum into a success probability;
//! - [`harness`]: configs, seeded ensembles, sweeps, fits and exporters.

pub mod error;
pub mod gas;
pub mod hamiltonian;
pub mod harness;
pub mod lzs;
pub mod noise;
pub mod oracle;

pub use error::{Error, Result};
