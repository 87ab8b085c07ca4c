//! Active learning for density-based crowd counting.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: scenes, labeled/unlabeled pools, point-file ingestion and
//!   synthetic scene generation.
//! - [`density`]: Gaussian density maps rasterized from head points.
//! - [`metrics`]: MAE, root-mean-squared error and the grid-region GAME family.
//! - [`partition`]: Jenks natural breaks and even-interval partitioning.
//! - [`selection`]: grid dissimilarity (GDSIM) and the partition-based weighted
//!   selection step, plus the random / even-partition / global-difference baselines.
//! - [`model`]: a small density regressor with an explicit latent extractor and
//!   hand-written gradients.
//! - [`alignment`]: distribution classifier with gradient reversal and latent MixUp.
//! - [`harness`]: the active-learning cycle driver, multi-trial runner, config
//!   and results files.

pub mod alignment;
mod atomic;
pub mod data;
pub mod density;
mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod selection;

pub use atomic::write_atomic;
pub use error::{Error, Result};
