//! Inference-specific transformation of multichannel motion-sensor data.
//!
//! A multi-task ConvNet (the *estimator*) learns to recognise both a
//! non-sensitive inference (activity) and a sensitive one (gender) from fixed
//! length sensor windows. A deep autoencoder (the *guardian*) is then trained
//! against the frozen estimator with the *neutralizer* objective, which pushes
//! the gender posterior towards 0.5 while keeping the activity posterior on the
//! true class. The [`audit`] module measures what attribute information is
//! left in the transformed data.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, CSV ingest and
//! the command line live in the companion `genshield` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod audit;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod guardian;
pub mod modelstore;
pub mod nn;
pub mod scalar;
mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
