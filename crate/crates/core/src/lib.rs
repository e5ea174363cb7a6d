//! Driven two-atom cavity QED with a van der Waals shift on the doubly
//! excited atomic state.
//!
//! The crate builds the truncated Hilbert space (cavity Fock ⊗ atom ⊗ atom),
//! the system Hamiltonian and Lindblad Liouvillian, solves for the steady
//! state by shifted inverse power iteration, evaluates ⟨a†a⟩, g⁽²⁾(0) and
//! g⁽³⁾(0), and unravels the master equation into quantum-jump trajectories
//! whose cavity clicks are grouped into emission bursts.
//!
//! Units: frequencies and rates in MHz with ħ = 1, times in µs.

pub mod config;
pub mod error;
pub mod hilbert;
pub mod mcwf;
pub mod model;
pub mod sparse;
pub mod spectra;
pub mod steady;
pub mod sweep;

pub use error::{Error, Result};
pub use hilbert::{Operator, SpaceSpec};
pub use model::{Liouvillian, SystemParams};
pub use steady::{DensityMatrix, Observables};

pub use num_complex::Complex64 as C64;
