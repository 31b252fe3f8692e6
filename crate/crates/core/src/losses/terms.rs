use nalgebra::Vector3;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::Quaternion;
use crate::imagebuf::{DepthMap, Grid, Image, Mask};

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn same(a: &Grid, b: &Grid) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Per-pixel, per-channel SSIM with `(2r+1)²` box statistics.
pub fn ssim_map_taped<'t>(a: Var<'t>, b: Var<'t>, radius: usize) -> Var<'t> {
    let mu_a = a.box_mean(radius);
    let mu_b = b.box_mean(radius);
    let var_a = (a * a).box_mean(radius) - mu_a * mu_a;
    let var_b = (b * b).box_mean(radius) - mu_b * mu_b;
    let cov = (a * b).box_mean(radius) - mu_a * mu_b;
    let num = (mu_a * mu_b * 2.0 + C1) * (cov * 2.0 + C2);
    let den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
    num / den
}

/// Photometric error `λ·|a−b| + (1−λ)(1−SSIM)/2`, averaged over channels and
/// clamped at zero; one channel out.
pub fn photometric_taped<'t>(a: Var<'t>, b: Var<'t>, lambda: f64, radius: usize) -> Var<'t> {
    let l1 = (a - b).abs().channel_mean();
    let dssim = (1.0 - ssim_map_taped(a, b, radius)).scale(0.5).channel_mean();
    (l1.scale(lambda) + dssim.scale(1.0 - lambda)).clamp(0.0, f64::INFINITY)
}

/// `|p − w| / (p + w + ε)`.
pub fn depth_diff_taped<'t>(projected: Var<'t>, sampled: Var<'t>, eps: f64) -> Var<'t> {
    (projected - sampled).abs() / (projected + sampled).offset(eps)
}

/// Mean over all pixels of `weight · auto · valid · σ`.
pub fn recon_loss_taped<'t>(sigma: Var<'t>, weight: Var<'t>, auto: &Grid, valid: &Grid) -> Var<'t> {
    let tape = sigma.tape();
    let gate = auto.zip_map(valid, |a, v| a * v).expect("mask shapes");
    (weight * sigma * tape.constant(gate)).mean()
}

/// Mean over all pixels of `auto · valid · D^diff`.
pub fn gc_loss_taped<'t>(diff: Var<'t>, auto: &Grid, valid: &Grid) -> Var<'t> {
    let tape = diff.tape();
    let gate = auto.zip_map(valid, |a, v| a * v).expect("mask shapes");
    (diff * tape.constant(gate)).mean()
}

/// Statistic that divides the depth map before the smoothness gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SmoothNorm {
    #[default]
    Min,
    Mean,
}

/// Edge-aware smoothness of `depth / (min(depth) + ε)` (or the mean), weighted
/// by `exp(−|∇ Ī|)` of the channel-mean image.
pub fn smooth_loss_taped<'t>(depth: Var<'t>, image: Var<'t>, eps: f64, by: SmoothNorm) -> Var<'t> {
    let scale = match by {
        SmoothNorm::Min => depth.min_reduce(),
        SmoothNorm::Mean => depth.mean(),
    };
    let norm = depth / scale.offset(eps);
    let gray = image.channel_mean();
    let wx = gray.grad_x().abs().neg().exp();
    let wy = gray.grad_y().abs().neg().exp();
    (norm.grad_x().abs() * wx + norm.grad_y().abs() * wy).mean()
}

/// Learnable weights balancing the translation and rotation parts of [`aug_pose_loss`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AugLossParams {
    pub w_t: f64,
    pub w_q: f64,
}

/// `‖t_m − t_aug‖ e^{−w_t} + w_t + ‖q_m − q_aug‖ e^{−w_q} + w_q` on taped
/// `1 × 3` translations, `1 × 4` quaternions and scalar weights.
pub fn aug_pose_loss_taped<'t>(
    t_m: Var<'t>,
    q_m: Var<'t>,
    t_aug: Var<'t>,
    q_aug: Var<'t>,
    w_t: Var<'t>,
    w_q: Var<'t>,
) -> Var<'t> {
    let e_t = (t_m - t_aug).square().sum().sqrt();
    let e_q = (q_m - q_aug).square().sum().sqrt();
    e_t * w_t.neg().exp() + w_t + e_q * w_q.neg().exp() + w_q
}

pub fn ssim_map(a: &Image, b: &Image, radius: usize) -> Result<Grid> {
    same(a, b)?;
    let tape = Tape::new();
    let s = ssim_map_taped(tape.constant(a.grid().clone()), tape.constant(b.grid().clone()), radius);
    Ok((*s.value()).clone())
}

pub fn photometric(a: &Image, b: &Image, lambda: f64, radius: usize) -> Result<Grid> {
    same(a, b)?;
    let tape = Tape::new();
    let s = photometric_taped(
        tape.constant(a.grid().clone()),
        tape.constant(b.grid().clone()),
        lambda,
        radius,
    );
    Ok((*s.value()).clone())
}

pub fn depth_diff(projected: &DepthMap, sampled: &DepthMap, eps: f64) -> Result<Grid> {
    same(projected, sampled)?;
    let tape = Tape::new();
    let d = depth_diff_taped(
        tape.constant(projected.grid().clone()),
        tape.constant(sampled.grid().clone()),
        eps,
    );
    Ok((*d.value()).clone())
}

pub fn weight_mask(diff: &Grid) -> Mask {
    Mask::new(diff.map(|d| 1.0 - d)).expect("depth differences lie in [0, 1)")
}

/// One where warping explains the target strictly better than the unwarped source.
pub fn auto_mask(sigma_warp: &Grid, sigma_ident: &Grid) -> Result<Mask> {
    Mask::new(sigma_warp.zip_map(sigma_ident, |w, i| if w < i { 1.0 } else { 0.0 })?)
}

pub fn recon_loss(sigma: &Grid, weight: &Mask, auto: &Mask, valid: &Mask) -> Result<f64> {
    same(sigma, weight)?;
    same(sigma, auto)?;
    same(sigma, valid)?;
    let tape = Tape::new();
    let l = recon_loss_taped(
        tape.constant(sigma.clone()),
        tape.constant(weight.grid().clone()),
        auto,
        valid,
    );
    Ok(l.item())
}

pub fn gc_loss(diff: &Grid, auto: &Mask, valid: &Mask) -> Result<f64> {
    same(diff, auto)?;
    same(diff, valid)?;
    let tape = Tape::new();
    Ok(gc_loss_taped(tape.constant(diff.clone()), auto, valid).item())
}

pub fn smooth_loss(depth: &DepthMap, image: &Image, eps: f64, by: SmoothNorm) -> Result<f64> {
    same(depth, image)?;
    let tape = Tape::new();
    let l = smooth_loss_taped(
        tape.constant(depth.grid().clone()),
        tape.constant(image.grid().clone()),
        eps,
        by,
    );
    Ok(l.item())
}

/// Plain evaluation of the augmentation loss; quaternions should share the `w ≥ 0` hemisphere.
pub fn aug_pose_loss(
    t_m: &Vector3<f64>,
    q_m: &Quaternion,
    t_aug: &Vector3<f64>,
    q_aug: &Quaternion,
    params: AugLossParams,
) -> f64 {
    let tape = Tape::new();
    let v3 = |v: &Vector3<f64>| tape.constant(Grid::from_vec(v.as_slice().to_vec()));
    let v4 = |q: &Quaternion| tape.constant(Grid::from_vec(q.to_array().to_vec()));
    aug_pose_loss_taped(
        v3(t_m),
        v4(q_m),
        v3(t_aug),
        v4(q_aug),
        tape.scalar(params.w_t),
        tape.scalar(params.w_q),
    )
    .item()
}
