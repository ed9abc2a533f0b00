//! Plug-and-play learned-proximal MRI reconstruction at desk scale.

pub mod config;
pub mod denoiser;
pub mod error;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod phantom;
pub mod recon;
pub mod sampling;
pub mod rng;

pub use error::{Error, Result};
