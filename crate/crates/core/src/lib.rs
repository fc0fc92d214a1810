//! Probability-ordered quantum circuit synthesis with a learned gate library.
//!
//! Tasks are target unitaries. Circuits over the current library are
//! enumerated in decreasing prior probability; repeated sub-circuits among the
//! solutions are abstracted into new gates when they shorten the total
//! description of the solved tasks.

pub mod circuit;
pub mod enumerate;
pub mod error;
pub mod gates;
pub mod io;
pub mod learn;
pub mod library;
pub mod matrix;
pub mod program;
pub mod taskgen;
pub mod train;

pub use circuit::{Circuit, ConnectivityConstraint, Placement};
pub use error::{Error, Result};
pub use gates::{Gate, GateRef};
pub use library::Library;
pub use matrix::{canonical_key, phase_aligned_distance, ComplexMatrix, UnitaryKey};
pub use program::{parse_program, Program};
