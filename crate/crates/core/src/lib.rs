//! Phasor-domain dynamic simulation of the IEEE 39-bus New England system,
//! with wind plants and a converter-interfaced battery.

mod error;
mod table;

pub mod analysis;
pub mod converter;
pub mod loads;
pub mod machines;
pub mod network;
pub mod ode;
pub mod sim;
pub mod storage;
pub mod wind;

pub use error::{Error, Result};
