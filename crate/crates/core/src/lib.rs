//! Simulation of the driven dissipative Jaynes-Cummings oscillator in the
//! strongly dispersive regime.
//!
//! The crate is organised by subsystem:
//!
//! - [`hilbert`]: truncated Fock/qubit operators and the JC and effective Duffing Hamiltonians.
//! - [`specfun`]: complex-argument `0F1`, `0F2` and log-Gamma.
//! - [`lindblad`]: Liouvillian construction, steady states, time evolution, partial traces and entropies.
//! - [`sse`]: diffusive quantum trajectories with an explicit weak order-2 scheme, episode detection,
//!   lifetime histograms and spectra.
//! - [`phasespace`]: Husimi Q and Wigner functions, the analytic Duffing results and critical points.
//! - [`meanfield`]: Maxwell-Bloch / neoclassical dynamics, S-curves and the bistability leaf.
//!
//! All rates are angular frequencies in a single inverse-time unit and `ħ = 1`.

pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod linalg;
pub mod meanfield;
pub mod ode;
pub mod params;
pub mod phasespace;
pub mod rng;
pub mod specfun;
pub mod sse;

pub use error::{Error, Result};
pub use params::SystemParams;

pub use num_complex::Complex64 as C64;
