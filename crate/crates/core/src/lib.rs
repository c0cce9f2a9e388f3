//! Simulation and optimal control of Rydberg-atom circularization.
//!
//! The crate is organised bottom-up:
//!
//! * [`atom`]: quantum-defect energies, Numerov radial functions and dipole
//!   matrix elements in the spherical basis.
//! * [`stark`]: DC Stark blocks per `m_l`, ladder classification and the
//!   truncated [`stark::BasisModel`] used for dynamics.
//! * [`pulse`]: sampled RF waveforms, guess pulses, quadrature
//!   demodulation, coarse graining and the amplitude/spectral constraints.
//! * [`propagator`]: Chebyshev propagation of the Schrödinger equation.
//! * [`spin`]: the spin-J picture of the lowest diagonal ladder: Bloch
//!   coordinates and spin coherent states.
//! * [`krotov`]: Krotov's method for state-to-state transfer.
//! * [`robustness`] and [`qsl`]: noise studies and the speed-limit sweep.
//! * [`io`]: the text/JSON interchange formats shared with the CLI.
//!
//! All internal quantities are in atomic units unless a name says
//! otherwise (`_ns`, `_mv`, `_v_per_cm`, `_mhz`).

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atom;
pub mod io;
pub mod krotov;
pub mod propagator;
pub mod pulse;
pub mod qsl;
pub mod robustness;
pub mod spin;
pub mod stark;
pub mod units;

mod error;
pub mod linalg;

pub use error::Error;
pub use num_complex::Complex64;

/// Crate version embedded in every output file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
