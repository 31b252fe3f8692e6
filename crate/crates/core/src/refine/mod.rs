//! Pose estimation by direct photometric alignment, hierarchical refinement
//! through synthesised intermediate views, and joint depth/pose refinement
//! under the full training objective.

mod estimator;
mod hierarchy;
mod joint;
mod pyramid;

pub use estimator::{direct_estimate, estimate, photometric_pose_loss, pose_objective, Estimate, EstimatorConfig, Problem};
pub use hierarchy::{hierarchical_refine, RefineConfig, RefinementResult};
pub use joint::{joint_refine_step, JointConfig, JointState};
pub use pyramid::DepthPyramid;
