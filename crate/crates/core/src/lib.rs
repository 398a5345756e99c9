//! Indoor positioning from Wi-Fi received signal strength, with a
//! geometric and signal-strength dilution of precision (DOP) qualifier,
//! BSS coverage indicators and a simulation harness.
//!
//! Modules, bottom-up:
//!
//! - [`radio`]: access points, scans, environments and the dBm/mW bridge.
//! - [`propagation`]: Friis, Interlink Networks and SNAP-WPS range models.
//! - [`dop`]: the visibility / threshold / geometry DOP qualifier.
//! - [`solver`]: Gauss-Newton trilateration over model ranges.
//! - [`coverage`]: pixel cells and their compactness indicators.
//! - [`sim`]: trajectories, noisy scans and DOP-versus-error reports.
//! - [`io`]: JSON and CSV file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod dop;
pub mod error;
pub mod io;
pub mod propagation;
pub mod radio;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
