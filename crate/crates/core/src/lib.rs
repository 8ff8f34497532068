//! Simulation core for federated edge learning over noisy channels.
//!
//! Everything here is a pure function of its inputs: random draws come from
//! explicitly passed [`numerics::RngStream`]s keyed by `(seed, stream_id)`, so
//! runs are reproducible bit for bit. The crate builds without `std` (it only
//! needs `alloc`); enable the `parallel` feature to spread per-device work
//! across threads without changing any result.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bounds;
pub mod channel;
pub mod data;
mod error;
pub mod model;
pub mod numerics;
pub mod topology;
pub mod trainer;

pub use error::{Error, Result};
