//! Pinhole camera model and rigid-body pose algebra.
//!
//! Pixel coordinates follow `(u, v) = (column, row)` with pixel centres at
//! integer positions. A [`Pose`] maps points from one camera frame into
//! another: `p' = R p + t`.

mod camera;
mod lie;
mod pose;

pub use camera::{Intrinsics, Projected, EPS_Z};
pub use lie::{exp_twist_generic, skew, Real, Twist};
pub use pose::{Pose, PoseAccumulator, Quaternion, REORTHONORMALIZE_EVERY};

/// Rotation angle in radians of a rotation matrix.
pub fn rotation_angle(r: &nalgebra::Matrix3<f64>) -> f64 {
    let v = nalgebra::Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin = 0.5 * v.norm();
    let cos = 0.5 * (r.trace() - 1.0);
    sin.atan2(cos)
}
