//! Dense grid containers and the elementary image operations used by the
//! warps and losses.
//!
//! All grids are row-major with interleaved channels. Pixel centres sit at
//! integer coordinates and `(u, v)` means `(column, row)`.

mod filter;
mod grid;
pub mod io;
pub(crate) mod sample;

pub use filter::{box_mean, box_mean_adjoint, dilate, grad_x, grad_y};
pub use grid::{DepthMap, Grid, Image, Mask};
pub use sample::{
    bilinear_sample, bilinear_tap, downsample2, upsample, upsample_adjoint, BilinearTap,
};
