use nalgebra::Vector3;
use rayon::prelude::*;

use super::check_size;
use crate::autodiff::{se3, Var};
use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Pose, EPS_Z};
use crate::imagebuf::{bilinear_tap, sample::apply_tap, DepthMap, Grid, Image, Mask};

/// Output of [`inverse_warp`], laid out on the target pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    /// Source image resampled at the projected coordinates (zero where invalid).
    pub warped_image: Image,
    /// Camera depth of each target point after the rigid transform (zero where invalid).
    pub projected_depth: DepthMap,
    /// Source depth resampled at the projected coordinates (zero where invalid or not requested).
    pub sampled_depth: DepthMap,
    /// In bounds and in front of the camera.
    pub valid: Mask,
}

/// Warps `source` onto the target pixel grid: every target pixel is lifted
/// with `target_depth`, moved by `pose` (target frame to source frame) and
/// projected into the source image.
pub fn inverse_warp(
    source: &Image,
    target_depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<WarpResult> {
    warp(source, None, target_depth, pose, k)
}

/// Like [`inverse_warp`], additionally resampling the source depth map.
pub fn inverse_warp_with_depth(
    source: &Image,
    source_depth: &DepthMap,
    target_depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<WarpResult> {
    warp(source, Some(source_depth), target_depth, pose, k)
}

fn warp(
    source: &Image,
    source_depth: Option<&DepthMap>,
    target_depth: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
) -> Result<WarpResult> {
    check_size("source image", source, k)?;
    check_size("target depth", target_depth, k)?;
    if let Some(d) = source_depth {
        check_size("source depth", d, k)?;
    }
    if !target_depth.is_positive() {
        return Err(invalid("target depth must be positive"));
    }
    let (h, w, c) = source.shape();
    // Per pixel: c image values, projected depth, sampled depth, valid flag.
    let stride = c + 3;
    let mut buf = vec![0.0; h * w * stride];
    buf.par_chunks_mut(w * stride).enumerate().for_each(|(r, row)| {
        for (col, px) in row.chunks_exact_mut(stride).enumerate() {
            let d = target_depth.get(r, col, 0);
            let ray = [(col as f64 - k.cx) / k.fx, (r as f64 - k.cy) / k.fy, 1.0];
            let p = pose.rotation * Vector3::new(ray[0] * d, ray[1] * d, ray[2] * d) + pose.translation;
            if p[2] <= EPS_Z {
                continue;
            }
            let u = k.fx * p[0] / p[2] + k.cx;
            let v = k.fy * p[1] / p[2] + k.cy;
            let Some(tap) = bilinear_tap(w, h, u, v) else { continue };
            apply_tap(source, &tap, &mut px[..c]);
            px[c] = p[2];
            if let Some(sd) = source_depth {
                let mut s = [0.0];
                apply_tap(sd, &tap, &mut s);
                px[c + 1] = s[0];
            }
            px[c + 2] = 1.0;
        }
    });
    let pick = |off: usize, n: usize| -> Grid {
        let data = buf.chunks_exact(stride).flat_map(|px| px[off..off + n].iter().copied()).collect();
        Grid::new(h, w, n, data).expect("shape")
    };
    Ok(WarpResult {
        warped_image: Image::new(pick(0, c))?,
        projected_depth: DepthMap::new(pick(c, 1))?,
        sampled_depth: DepthMap::new(pick(c + 1, 1))?,
        valid: Mask::new(pick(c + 2, 1))?,
    })
}

/// Taped counterpart of [`WarpResult`].
pub struct TapedWarp<'t> {
    pub warped_image: Var<'t>,
    pub projected_depth: Var<'t>,
    pub sampled_depth: Option<Var<'t>>,
    pub valid: Grid,
    /// Projected source-image coordinates (`h × w × 2`).
    pub coords: Var<'t>,
}

/// Differentiable inverse warp; `pose` is a taped pose (see [`se3`]) and the
/// depths are `h × w × 1` values. Forward values equal [`inverse_warp`]'s on
/// valid pixels.
pub fn inverse_warp_taped<'t>(
    source: Var<'t>,
    source_depth: Option<Var<'t>>,
    target_depth: Var<'t>,
    pose: Var<'t>,
    k: &Intrinsics,
) -> TapedWarp<'t> {
    let points = se3::transform_points(pose, se3::backproject(target_depth, k));
    let (coords, front) = se3::project(points, k);
    let (warped, inside) = source.bilinear_sample(coords);
    let valid = front.zip_map(&inside, |a, b| a * b).expect("same shape");
    let valid_var = source.tape().constant(valid.clone());
    let projected_depth = points.select_channel(2) * valid_var;
    let sampled_depth = source_depth.map(|d| d.bilinear_sample(coords).0);
    TapedWarp { warped_image: warped, projected_depth, sampled_depth, valid, coords }
}
