//! Robust beamforming and power-splitting design for multi-user NOMA downlinks
//! with simultaneous wireless information and power transfer in an underlay
//! cognitive-radio network, under a non-linear energy-harvesting model.
//!
//! The crate is `no_std` (with `alloc`). The optional `std` feature only adds
//! wall-clock timing to solver results.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod conic;
pub mod eh_max;
pub mod eh_model;
pub mod error;
pub mod extraction;
pub mod linalg;
pub mod power_min;
pub mod robust;
pub mod stats;
pub mod system_model;

pub use error::{Error, Result};
