use super::estimator::{estimate_at_level, pose_objective, EstimatorConfig, Problem};
use crate::error::{invalid, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::imagebuf::{dilate, DepthMap, Image, Mask};
use crate::losses::depth_diff;
use crate::warp::{inverse_warp_with_depth, WarpResult};

/// Pixels within this distance of a depth-inconsistent pixel are skipped too.
const OCCLUSION_MARGIN: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    /// Number of pose levels `M`.
    pub levels: usize,
    pub coarse: EstimatorConfig,
    pub residual: EstimatorConfig,
    /// Residual levels ignore target pixels whose depth inconsistency under
    /// the current pose reaches this value (likely occluded).
    pub occlusion_threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { levels: 2, coarse: EstimatorConfig::coarse(), residual: EstimatorConfig::residual(), occlusion_threshold: 0.02 }
    }
}

impl RefineConfig {
    pub fn with_levels(levels: usize) -> Self {
        Self { levels, ..Self::default() }
    }
}

/// Output of [`hierarchical_refine`]. Index `m` holds level `m + 1`.
#[derive(Clone, Debug)]
pub struct RefinementResult {
    /// `T_1 … T_M`, each mapping frame `t+1` coordinates into frame `t`.
    pub poses: Vec<Pose>,
    /// `T^r_1 … T^r_{M−1}` with `poses[m + 1] = residuals[m] ∘ poses[m]`.
    pub residuals: Vec<Pose>,
    /// Frame `t` warped with `T_1 … T_{M−1}`.
    pub intermediate_views: Vec<Image>,
    /// Residual objective of each level's pose on the pair, over a shared mask.
    pub level_losses: Vec<f64>,
}

impl RefinementResult {
    pub fn finest(&self) -> &Pose {
        self.poses.last().unwrap()
    }
}

/// Coarse pose from the raw pair, then `M − 1` rounds of: synthesise the
/// intermediate view with the current pose, estimate the residual motion
/// between that view and frame `t+1`, and compose.
///
/// The residual `T^r_m` is a left increment on `T_m`, so
/// `T_{m+1} = T^r_m ∘ T_m` holds exactly. It is estimated by re-warping
/// frame `t` through `T^r ∘ T_m` rather than resampling the intermediate
/// image a second time; the two agree up to interpolation, and resampling
/// twice pins the optimum to whole-pixel offsets. Residual levels skip
/// target pixels the intermediate view marks as depth-inconsistent.
///
/// `level_losses` are all measured on the pixels consistent under the final
/// pose, so they are comparable across levels.
pub fn hierarchical_refine(
    x_t: &Image,
    x_t1: &Image,
    depth_t: &DepthMap,
    depth_t1: &DepthMap,
    k: &Intrinsics,
    cfg: &RefineConfig,
) -> Result<RefinementResult> {
    if cfg.levels == 0 {
        return Err(invalid("refinement needs at least one level"));
    }
    let pair = Problem::new(x_t, x_t1, depth_t1, k);
    let first = estimate_at_level(&pair, &Pose::identity(), &cfg.coarse, 1)?;
    let mut poses = vec![first.pose];
    let mut residuals = Vec::new();
    let mut intermediate_views = Vec::new();
    for m in 1..cfg.levels {
        let current = poses[m - 1];
        let (warp, consistent) = consistency(x_t, depth_t, depth_t1, &current, k, cfg.occlusion_threshold)?;
        let problem = Problem { target_mask: Some(&consistent), ..pair };
        let est = estimate_at_level(&problem, &current, &cfg.residual, m + 1)?;
        let residual = est.twist.exp();
        let next = residual.compose(&current);
        poses.push(next);
        residuals.push(residual);
        intermediate_views.push(warp.warped_image);
    }
    let (_, common) = consistency(x_t, depth_t, depth_t1, poses.last().unwrap(), k, cfg.occlusion_threshold)?;
    let masked = Problem { target_mask: Some(&common), ..pair };
    let level_losses = poses
        .iter()
        .map(|p| pose_objective(&masked, p, &cfg.residual))
        .collect::<Result<Vec<_>>>()?;
    Ok(RefinementResult { poses, residuals, intermediate_views, level_losses })
}

/// Frame `t` warped with `pose`, and the target pixels whose depth agrees
/// with the depth of frame `t` at the sampled location.
fn consistency(
    x_t: &Image,
    depth_t: &DepthMap,
    depth_t1: &DepthMap,
    pose: &Pose,
    k: &Intrinsics,
    threshold: f64,
) -> Result<(WarpResult, Mask)> {
    let warp = inverse_warp_with_depth(x_t, depth_t, depth_t1, pose, k)?;
    let diff = depth_diff(&warp.projected_depth, &warp.sampled_depth, 1e-7)?;
    let inconsistent = Mask::new(diff.map(|d| if d < threshold { 0.0 } else { 1.0 }))?;
    let consistent = Mask::new(dilate(&inconsistent, 1, OCCLUSION_MARGIN).map(|v| 1.0 - v))?;
    Ok((warp, consistent))
}
