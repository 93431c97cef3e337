//! Rigorous coupled-wave solvers for diffraction from periodic EUV masks.
//!
//! The core pipeline expands the field in each layer of a periodic stack into
//! Fourier harmonics, solves a per-layer eigenproblem for the modal basis,
//! and matches tangential fields at every interface to obtain one dense
//! linear system for all modal amplitudes. On top of that sit two
//! network-based solvers: a neural operator trained against the modal
//! system's residual, and a physics-informed network trained against the
//! Helmholtz residual plus boundary conditions.
//!
//! Conventions used throughout (the time factor exp(+i omega t) is dropped):
//! permittivity of an absorber is (n - ik)^2 with a non-positive imaginary
//! part; the incident wave travels toward negative z; the stack occupies
//! -D <= z <= 0 with vacuum above and an optional uniform substrate below.
//! Lengths are nanometers, wavenumbers 1/nm.

pub mod error;
pub mod geometry;
pub mod matching;
pub mod modes;
pub mod nn;
pub mod numerics;
pub mod oracles;
pub mod pinn;
pub mod solver;
pub mod wgno;

pub use error::{Error, Result};
pub use numerics::{c64, C64};
