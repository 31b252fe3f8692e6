//! Reverse-mode differentiation over grid-valued nodes.
//!
//! A [`Tape`] records every operation in execution order; [`Tape::backward`]
//! walks it in reverse to accumulate gradients for the leaves created with
//! [`Tape::leaf`]. Values are [`Grid`]s; scalars are 1×1×1 grids.
//!
//! ```
//! use monorefine::autodiff::Tape;
//! use monorefine::imagebuf::Grid;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Grid::scalar(3.0));
//! let y = tape.leaf(Grid::scalar(-2.0));
//! let z = x * y + x;
//! let grads = tape.backward(z).unwrap();
//! assert_eq!(grads.wrt(x).as_scalar(), -1.0);
//! assert_eq!(grads.wrt(y).as_scalar(), 3.0);
//! ```
//!
//! Comparisons produce constant masks and every discrete choice an op makes
//! (sign of `abs`, active side of `clamp`, bilinear cell, arg-min, …) is
//! folded into [`Tape::fingerprint`], which finite-difference checks use to
//! detect that a perturbation crossed a non-differentiable point.
//!
//! [`Grid`]: crate::imagebuf::Grid

mod dual;
mod ops;
pub mod se3;
mod tape;

pub use dual::Dual;
pub use tape::{Gradients, Tape, Var, DIV_GUARD};
