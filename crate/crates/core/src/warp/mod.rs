//! Inverse warping for view synthesis and forward warping with z-buffered
//! splatting and hole filling for pose augmentation.

mod forward;
mod holes;
mod inverse;

pub use forward::{forward_warp, ForwardWarpResult};
pub use holes::{fill_depth_nearest, fill_holes, FilledView, HoleFillConfig};
pub use inverse::{inverse_warp, inverse_warp_taped, inverse_warp_with_depth, TapedWarp, WarpResult};

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::imagebuf::Grid;

pub(crate) fn check_size(what: &str, g: &Grid, k: &Intrinsics) -> Result<()> {
    if g.height() != k.height || g.width() != k.width {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{} but the camera is {}x{}",
            g.width(),
            g.height(),
            k.width,
            k.height
        )));
    }
    Ok(())
}
