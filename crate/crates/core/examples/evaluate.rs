//! Depth and odometry metrics on hand-made predictions, plus a KITTI pose file round trip.

use monorefine::eval::{
    depth_metrics, format_kitti_poses, odom_metrics, parse_kitti_poses, OdomConfig, ScaleCorrection, Scaling,
    Trajectory,
};
use monorefine::geometry::Pose;
use monorefine::imagebuf::{DepthMap, Mask};
use nalgebra::Vector3;

fn main() -> monorefine::Result<()> {
    let gt = DepthMap::from_fn(24, 64, |r, c| 5.0 + 0.2 * r as f64 + 0.05 * c as f64)?;
    let pred = DepthMap::from_fn(24, 64, |r, c| 2.0 * gt.get(r, c, 0) * (1.0 + 0.03 * ((r * 7 + c) % 5) as f64))?;
    let valid = Mask::ones(24, 64);
    for scaling in [Scaling::None, Scaling::Median] {
        let m = depth_metrics(&pred, &gt, &valid, scaling, 80.0)?;
        println!("{scaling:?}: AbsRel {:.4}, RMSE log {:.4}, d<1.25 {:.3}", m.abs_rel, m.rmse_log, m.a1);
    }

    let path = |step: f64| -> Trajectory {
        let mut poses = vec![Pose::identity()];
        for i in 1..400 {
            let turn = Pose::from_euler_xyz(0.0, 0.01 * (i as f64 / 40.0).sin(), 0.0, Vector3::new(0.0, 0.0, step));
            poses.push(poses[i - 1].compose(&turn));
        }
        Trajectory::new(poses)
    };
    let (gt_path, pred_path) = (path(1.0), path(1.02));
    for scale in [ScaleCorrection::None, ScaleCorrection::PathLength] {
        let m = odom_metrics(&pred_path, &gt_path, &OdomConfig { scale })?;
        println!(
            "{scale:?}: t_rel {:.3} %, r_rel {:.4} deg/100 m, ATE {:.4} m over {} segments",
            m.t_rel.unwrap_or(f64::NAN),
            m.r_rel.unwrap_or(f64::NAN),
            m.ate,
            m.segments
        );
    }

    let text = format_kitti_poses(&gt_path.poses);
    let back = parse_kitti_poses(&text)?;
    let worst = gt_path.poses.iter().zip(&back).map(|(a, b)| (a.to_matrix() - b.to_matrix()).abs().max()).fold(0.0, f64::max);
    println!("KITTI file: {} lines, round-trip error {worst:.1e}", back.len());
    Ok(())
}
