//! Simulation and verification of post-selected linear-optical gates.
//!
//! * [`fock`]: occupation vectors, photon-number sectors, permanents and the
//!   lift of mode unitaries to sector unitaries.
//! * [`conditional`]: measurement (Kraus) operators under ancilla
//!   post-selection, conditional states, completeness and sector
//!   decomposition.
//! * [`ns_gate`]: nonlinear sign-shift designs, functioning-condition checks
//!   and unitary completion of constrained mode matrices.
//! * [`bound`]: the analytic feasibility region and success-probability
//!   bound for one ancillary photon, and a numeric search that tests it.

pub mod bound;
pub mod conditional;
pub mod error;
pub mod exec;
pub mod fock;
pub mod ns_gate;
pub mod optim;
pub mod random;

pub use error::{Error, Result, Violation};
pub use exec::Execution;
pub use fock::{CMatrix, FockSector, LopCircuit, OccupationVector};
