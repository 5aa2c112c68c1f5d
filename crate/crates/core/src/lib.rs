//! Hyperhypernetwork antenna-design stack at desk scale.
//!
//! Modules, bottom-up:
//! - [`autodiff`]: dense tensors, a reverse-mode tape and Adam.
//! - [`em`]: spherical radiation maps, directivity, array gain and geometric metrics.
//! - [`link`]: QPSK over Rician fading with maximal-ratio combining.
//! - [`losses`]: MS-SSIM, occupancy cross-entropies, constraint loss, learned-weight multiloss.
//! - [`datagen`]: synthetic antennas, surrogate radiation and array samples.
//! - [`nets`]: the primary, hyper, hyperhyper, refinement and simulator networks and their trainers.
//! - [`hyperinit`]: fan-in initialization schemes and the variance probe.
//! - [`blocksel`]: entropy scores per layer and exact knapsack selection.

pub mod autodiff;
pub mod blocksel;
pub mod datagen;
pub mod em;
pub mod error;
pub mod hyperinit;
pub mod link;
pub mod losses;
pub mod nets;

pub use autodiff::{AdamConfig, AdamState, ParamStore, Tape, Tensor, Var};
pub use error::{Error, Result};
