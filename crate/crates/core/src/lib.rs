//! Synthesis and noise analysis of multi-qubit parity phase gates on Rydberg
//! atom arrays.
//!
//! The crate covers the full workflow:
//!
//! * [`model`] — geometries, physical parameters, pulse schedules, parity
//!   gate targets and the block decomposition of the Rydberg Hamiltonian;
//! * [`propagate`] — dense per-block propagation and a matrix-free Krylov
//!   stepper for large non-Hermitian Hamiltonians;
//! * [`fidelity`] — Bell-state/average gate fidelities and Rydberg-time
//!   functionals;
//! * [`grape`] — gradient-based pulse optimization with smoothness and
//!   Rydberg-time regularization, speed-limit scans, Rabi ramps and
//!   θ-parametrized gate families;
//! * [`motional`] — intrinsic-noise simulation (decay, photon recoil, van
//!   der Waals forces) in truncated oscillator spaces and error budgets;
//! * [`tomography`] — first-order Pauli error channels of native gates and
//!   circuit decompositions under dissipation;
//! * [`robustness`] — Monte-Carlo evaluation under stochastic control
//!   errors;
//! * [`oracles`] — independent brute-force reference implementations used
//!   by the test suites.

pub mod fidelity;
pub mod grape;
pub mod linalg;
pub mod model;
pub mod motional;
pub mod optim;
pub mod oracles;
pub mod propagate;
pub mod robustness;
#[cfg(test)]
mod test_support;
pub mod tomography;

pub use num_complex::Complex64;
