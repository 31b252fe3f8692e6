//! Depth and odometry metrics and KITTI pose files.

mod depth;
mod kitti;
mod odom;

pub use depth::{depth_metrics, DepthMetrics, Scaling};
pub use kitti::{format_kitti_poses, parse_kitti_poses, read_kitti_poses, write_kitti_poses};
pub use odom::{odom_metrics, umeyama_sim3, OdomConfig, OdomMetrics, ScaleCorrection, Trajectory, SEGMENT_LENGTHS};
