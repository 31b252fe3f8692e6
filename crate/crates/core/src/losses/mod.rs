//! Training objective: photometric error with SSIM, depth-consistency
//! masks, reconstruction / geometry-consistency / smoothness terms, the
//! pose-augmentation loss and their weighted total.
//!
//! Every term has one taped implementation; the plain functions evaluate
//! it on a throwaway [`Tape`](crate::autodiff::Tape) so both paths agree
//! exactly.

mod pair;
mod terms;

pub use pair::{
    pair_loss, pair_loss_values, total_loss, AssociationMode, LossConfig, PairInputs, PairLoss,
    PairLossBundle, TermMasks, TermRow,
};
pub use terms::{
    aug_pose_loss, aug_pose_loss_taped, auto_mask, depth_diff, depth_diff_taped, gc_loss,
    gc_loss_taped, photometric, photometric_taped, recon_loss, recon_loss_taped, smooth_loss,
    smooth_loss_taped, ssim_map, SmoothNorm, ssim_map_taped, weight_mask, AugLossParams, C1, C2,
};
