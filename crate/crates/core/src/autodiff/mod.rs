//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation as a node whose inputs were recorded
//! before it, so the backward sweep is a single reverse pass over the node
//! list. Parameters live in a [`ParamStore`]; each training step binds the
//! store onto a fresh tape, runs the forward pass, sweeps backward and hands
//! the collected gradients to [`AdamState::step`].
//!
//! ```
//! use hhn_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).item(), 6.0);
//! ```

mod adam;
pub(crate) mod kernels;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{Bound, GradAccum, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
