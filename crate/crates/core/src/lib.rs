//! Simulation of measurement-induced leakage in fluxonium dispersive readout.
//!
//! The crate builds the fluxonium + resonator (+ spurious two-level system)
//! Hamiltonian, dresses it with a monochromatic readout drive in an extended
//! Floquet (Sambe) space, and evolves the reduced density matrix under a
//! Floquet-Lindblad master equation to the readout steady state. Around that
//! sit the static branch analysis, the drive-power calibration from the ac
//! Stark shift, and the single-shot readout statistics used to turn IQ
//! histograms into transition probabilities.
//!
//! Frequencies are linear and in GHz, times in ns. Angular factors of 2π are
//! applied only where a generator is exponentiated or integrated.

pub mod branch;
pub mod calibration;
pub mod composite;
pub mod devices;
pub mod error;
pub mod floquet;
pub mod fluxonium;
pub mod linalg;
pub mod operator;
pub mod readout;
pub mod units;

pub use error::{Error, Result};
