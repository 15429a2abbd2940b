//! Floquet-Lindblad steady states of the driven fluxonium-resonator system.

pub mod eigen;
pub mod evolve;
pub mod lattice;
pub mod ode;
pub mod sweep;

pub use eigen::{select_quasi_eigenbasis, EigenMethod, QuasiEigenbasis, WindowOptions};
pub use evolve::{evolve_to_fixed_point, EvolutionDiagnostics, EvolutionOptions, FixedPointResult, ReducedModel};
pub use lattice::{build_floquet_hamiltonian, BandedOperator, FloquetLattice, FloquetSystem, Gauge, InitialState};
pub use sweep::{run_point, sweep_qnd_curves, DriveReference, QndCurve, QndPoint, SolverOptions};
