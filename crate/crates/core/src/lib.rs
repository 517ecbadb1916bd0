//! Simulation of leader election on anonymous asynchronous rings whose
//! channels carry content-free pulses, with executable invariant oracles.

mod error;
pub mod fabric;
pub mod oracle;
pub mod protocols;
pub mod trace;

pub use error::{Error, Result};
