//! Analysis, simulation and design toolkit for the buck-boost modified series
//! forward (BBMSF) DC-DC converter operating in continuous conduction mode.
//!
//! The crate is split the same way the work is done on a bench:
//!
//! * [`model`] holds the parameter records and the basic voltage relations.
//! * [`steady_state`] evaluates the closed-form CCM waveforms and device stresses.
//! * [`switched_sim`] integrates the ideal switched circuit and is used as an
//!   independent oracle for everything the closed forms predict.
//! * [`small_signal`] provides the averaged transfer functions and a numeric
//!   frequency-response extractor built on the switched simulator.
//! * [`design`] turns a set of operating points into stress envelopes and
//!   conduction-loss estimates.
//! * [`dmppt`] evaluates series strings of panel-level converters under mismatch.

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod dmppt;
mod error;
pub mod model;
pub mod small_signal;
pub mod steady_state;
pub mod switched_sim;

pub use error::{Error, Result};
pub use model::{ConverterParams, LoadModel, Parasitics, Violation};
pub use steady_state::{ResetDutyModel, SteadyStateReport};
pub use switched_sim::{PeriodicWaveform, SimConfig};
