//! Behavioral simulator for memristor-based differential neuromorphic
//! perception.
//!
//! The crate is organised around the signal chain: a sensor produces a
//! response, [`encoding`] extracts a feature and picks a pulse scheme, and
//! [`device`] integrates the memristor state under that scheme. The
//! [`tactile`] pipeline closes the loop around a grasp controller, the
//! [`vision`] pipeline runs a 25×40 array over compressed frames, and
//! [`eval`] turns traces and maps into the reported metrics.

pub mod config;
pub mod device;
pub mod encoding;
pub mod eval;
pub mod io;
pub mod tactile;
pub mod vision;

mod error;

pub use config::Config;
pub use device::{DeviceParams, MemristorState, PulseTrain, SweepSpec};
pub use error::{Error, Result};
