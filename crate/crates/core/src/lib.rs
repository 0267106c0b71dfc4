//! Spatio-temporal graph forecasting of PM2.5 transport.
//!
//! The crate builds a directed city graph gated by distance and terrain,
//! derives wind-advection edge features, and forecasts concentrations with a
//! message-passing + recurrent model rolled out autoregressively. A synthetic
//! advection-diffusion world doubles as test oracle and benchmark.

pub mod dataio;
pub mod error;
pub(crate) mod fsio;
pub mod featurize;
pub mod geograph;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use numerics::Tensor;
