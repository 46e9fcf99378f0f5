//! Transmission models for a planar cavity-magnonic device: an electric-LC resonator
//! side-coupled to a microstrip line, loaded with a ferrimagnetic film.
//!
//! The crate is organised around two forward models and the analysis built on them:
//!
//! - [`circuit`]: the lumped two-resonator equivalent circuit, evaluated through an
//!   ABCD cascade into a complex `S21`, plus closed-form intrinsic and radiative
//!   damping rates.
//! - [`hybrid`]: the three-mode (two photon modes, one magnon) input-output model,
//!   its non-Hermitian coupling matrix, the hybrid eigenbranches and the matrix
//!   transmission formula, swept over bias field and frequency.
//! - [`polarization`]: rotation-angle physics of the radiative damping, the
//!   dissipation order parameter, critical switching angles and cooperativities.
//! - [`fit`]: two-stage parameter extraction (circuit stage on photon-only spectra,
//!   coupling stage on field-sweep maps) over a bounded Levenberg-Marquardt solver.
//! - [`io`]: Touchstone v1 and CSV spectrum ingestion, grid-file and JSON run-config
//!   formats.
//!
//! Frequencies and damping rates are stored in linear Hz. Every formula that the
//! models are written in treats its `ω` symbols as angular frequencies, so the
//! conversion to rad/s happens inside the evaluators only.

pub mod circuit;
pub mod error;
pub mod fit;
pub mod hybrid;
pub mod io;
pub mod polarization;
pub mod presets;
pub mod units;

pub use error::{Error, ParseError, Result};
pub use units::{db_magnitude, to_angular, Angle, ComplexS21, DampingRate, Frequency};

/// Version tag written into every emitted file and required in run configs.
pub const SCHEMA_VERSION: u32 = 1;
