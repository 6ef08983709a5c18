//! Two transmons coupled through a multimode cable: spectra, ZZ
//! cancellation, and remote iSWAP/CZ gate simulation.
//!
//! Frequencies are ordinary frequencies in GHz and times are in ns;
//! phases accumulate as `2π·f·t`.

pub mod circuit;
pub mod dynamics;
pub mod error;
pub mod gatemetrics;
pub mod hilbert;
pub mod linalg;
pub mod par;
pub mod perturbation;
pub mod pulses;
pub mod spectrum;
pub mod system;

pub use circuit::{CircuitParams, ModeSelection, ModeSet, Qubit};
pub use error::{Error, Result};
pub use gatemetrics::{GateKind, GateReport};
pub use hilbert::{BareLabel, CouplingModel, TruncationSpec};
pub use par::Execution;
pub use pulses::ScheduleKind;
pub use system::System;
