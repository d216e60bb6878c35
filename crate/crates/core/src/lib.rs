//! Monocular depth estimation with a continuous conditional random field.
//!
//! A small convolutional regressor predicts one depth per superpixel; a
//! Gaussian CRF over the superpixel adjacency graph couples neighbouring
//! predictions. Because the energy is a negative-definite quadratic, the
//! partition function, the exact negative log-likelihood, its gradients and
//! the MAP estimate are all available in closed form from one Cholesky
//! factorisation per graph.
//!
//! Modules, in pipeline order:
//!
//! 1. [`render`] – synthetic tube scenes rendered with inverse-square lighting.
//! 2. [`superpixel`] – SLIC segmentation, node features and similarity channels.
//! 3. [`unary`] – conv trunk, superpixel pooling, fully connected head.
//! 4. [`crf`] – assembly of `I + L`, energy, NLL, gradients, MAP.
//! 5. [`train`] – joint SGD with momentum and best-validation selection.
//! 6. [`eval`] – rel / rms / log10 metrics.
//! 7. [`recon`] – back-projection to point clouds, PLY export.

pub mod config;
pub mod crf;
pub mod eval;
pub mod error;
pub mod geom;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod recon;
pub mod render;
pub mod sample;
pub mod seed;
pub mod superpixel;
pub mod train;
pub mod unary;
pub mod verify;

pub use error::{Error, Result};
pub use par::Exec;
