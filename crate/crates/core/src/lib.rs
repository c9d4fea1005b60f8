//! Spiked covariance models, high-dimension low-sample-size PCA scores and the
//! scaled-rotation limit that sample score plots converge to when the spiked
//! eigenvalues grow linearly with the dimension.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] builds covariance models with closed-form eigenstructure.
//! * [`simulate`] draws data through that eigenstructure with seeded substreams.
//! * [`pca`] computes sample PCA through the `n x n` dual Gram matrix.
//! * [`limit`] holds the limiting machinery (the `W` matrix, predicted scores,
//!   pairwise scaling/rotation/noise decomposition and the noise variance).
//! * [`experiments`] is the Monte Carlo harness.
//! * [`diagnose`] contains practitioner-facing analytics.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (default) and fall back to plain iterators otherwise. Every random stream is
//! keyed by index, so results do not depend on the thread count.

pub mod config;
pub mod diagnose;
pub mod error;
pub mod experiments;
pub mod io;
pub mod limit;
mod linalg;
pub mod model;
pub mod par;
pub mod pca;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
