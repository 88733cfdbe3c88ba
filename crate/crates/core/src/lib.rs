//! Per-cycle Monte-Carlo simulator of an upconversion-protected QKD receiver.
//!
//! The receiver upconverts the incoming 1.5 µm time-bin signal with a locally
//! generated pump in a χ(2) waveguide and detects the sum-frequency light with
//! free-running Si SPADs behind an AMZI. The pump doubles as the security
//! mechanism: filter stacks isolate every linear path to the detectors, the
//! pump pulse defines the optical gate, depletion of the pump flags bright
//! injections, and Bob's basis choice is applied as a pump phase.
//!
//! Modules, bottom-up:
//! - [`photonics`]: pulses, unit conversions, filter stacks, wavelength-isolation sweeps
//! - [`upconversion`]: waveguide conversion model, pump trains, gating bounds
//! - [`monitors`]: depletion and residual-signal monitors, single-pulse sampling test
//! - [`detection`]: AMZI time-bin decoder and SPAD model
//! - [`protocol`]: BB84 preparation, the end-to-end cycle, sifting, QBER, key rate
//! - [`adversary`]: attack strategies and closed-form leak/damage estimators
//! - [`harness`]: scenario loading, the parallel Monte-Carlo engine, reports

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod detection;
pub mod error;
pub mod harness;
pub mod monitors;
pub mod photonics;
pub mod protocol;
pub(crate) mod serde_util;
pub mod upconversion;

pub use error::{Error, Result};
