//! Thermal operations with explicit batteries on energy-diagonal states.

pub mod batteries;
pub mod bounds;
pub mod channels;
pub mod construction;
pub mod erasure;
pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod lp;
pub mod math;
pub mod spectra;

pub use error::{Error, Result};
